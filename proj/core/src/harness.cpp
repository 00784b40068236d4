// Copyright 2026 The otafl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "otafl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace otafl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string utc_now() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string(buf);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
}

}  // namespace

std::string run_records_csv(const RunResult& result) {
  std::ostringstream os;
  os << "t,loss,grad_norm_sq,accuracy,p_t,n_participants,mean_E_k,mean_gamma_hat\n";
  for (const auto& rec : result.records) {
    double mean_epochs = std::numeric_limits<double>::quiet_NaN();
    if (!rec.participants.empty()) {
      double acc = 0.0;
      for (int k : rec.participants) acc += rec.epochs_run[k];
      mean_epochs = acc / rec.participants.size();
    }
    os << rec.t << ',' << fmt_g(rec.global_loss) << ',' << fmt_g(rec.grad_norm_sq) << ','
       << fmt_g(rec.test_accuracy) << ',' << fmt_g(rec.p_t) << ','
       << rec.participants.size() << ',' << fmt_g(mean_epochs) << ','
       << fmt_g(rec.mean_gamma) << "\n";
  }
  return os.str();
}

std::string run_config_hash(const RunConfig& resolved) {
  return to_hex(fnv1a64(serialize_run_config(resolved)));
}

namespace {

json diagnostics_json(const RunResult& result) {
  json j;
  std::vector<LgdPoint> traj;
  std::vector<std::pair<double, double>> p_and_grad;
  std::vector<double> grad_series;
  for (const auto& rec : result.records) {
    if (!rec.skipped) {
      traj.push_back({rec.lgd_local_sq, rec.lgd_global_sq});
      p_and_grad.emplace_back(rec.p_t, rec.lgd_global_sq);
    }
    grad_series.push_back(rec.grad_norm_sq);
  }
  j["B_hat"] = nullptr;
  j["H_hat"] = nullptr;
  j["bound_satisfaction"] = nullptr;
  j["rate_slope"] = nullptr;
  j["r2"] = nullptr;
  if (traj.size() >= 2) {
    LGDEstimate est = estimate_BH(traj);
    j["B_hat"] = est.B_hat;
    j["H_hat"] = est.H_hat;
    auto bound = check_precoding_bound(p_and_grad, est.B_hat, est.H_hat,
                                       result.resolved.channel.power);
    j["bound_satisfaction"] = bound.fraction;
  }
  if (grad_series.size() >= 10) {
    try {
      RateFit fit = fit_rate(running_mean(grad_series));
      j["rate_slope"] = fit.slope;
      j["r2"] = fit.r2;
    } catch (const std::invalid_argument&) {
      // too few positive values; leave nulls
    }
  }
  return j;
}

}  // namespace

RunArtifacts execute_run(const RunConfig& cfg, const std::string& out_root, bool exact_dir,
                         const std::optional<std::string>& cell_label,
                         std::optional<int> repeat, std::optional<double> axis_value) {
  RunConfig resolved = variant_config(cfg.variant, cfg);
  validate_run_config(resolved);

  const std::string hash = run_config_hash(resolved);
  fs::path dir = exact_dir ? fs::path(out_root)
                           : fs::path(out_root) / ("run-" + hash);
  fs::create_directories(dir);

  RunArtifacts artifacts;
  artifacts.dir = dir.string();
  artifacts.result = run_training(resolved);
  const RunResult& result = artifacts.result;

  write_text(dir / "rounds.csv", run_records_csv(result));

  json manifest;
  manifest["schema_version"] = 1;
  manifest["code_version"] = kVersion;
  manifest["config_hash"] = hash;
  manifest["csv_schema"] =
      "t,loss,grad_norm_sq,accuracy,p_t,n_participants,mean_E_k,mean_gamma_hat";
  manifest["variant"] = variant_name(resolved.variant);
  manifest["config_text"] = serialize_run_config(resolved);
  if (resolved.data.source == DataConfig::Source::Csv) {
    std::ifstream data_in(resolved.data.csv_path, std::ios::binary);
    if (data_in) {
      std::ostringstream bytes;
      bytes << data_in.rdbuf();
      manifest["input_data_hash"] = to_hex(fnv1a64(bytes.str()));
    }
  }
  if (cell_label) manifest["cell"] = *cell_label;
  manifest["repeat"] = repeat ? json(*repeat) : json(0);
  if (axis_value) manifest["axis_value"] = *axis_value;
  manifest["master_seed"] = resolved.master_seed;
  manifest["rounds_completed"] = result.records.size();
  manifest["diverged"] = result.diverged;
  if (result.diverged) manifest["diverged_round"] = result.diverged_round;
  manifest["initial"] = {{"loss", result.initial_loss},
                         {"grad_norm_sq", result.initial_grad_norm_sq},
                         {"accuracy", result.initial_accuracy}};
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    manifest["final"] = {{"loss", last.global_loss},
                         {"grad_norm_sq", last.grad_norm_sq},
                         {"accuracy", last.test_accuracy}};
  }
  manifest["warnings"] = result.warnings;
  manifest["created_utc"] = utc_now();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  json partition = json::array();
  for (const auto& info : result.partition_info) {
    partition.push_back({{"client_id", info.client_id},
                         {"size", info.size},
                         {"home_label", info.home_label},
                         {"home_quota", info.home_quota},
                         {"home_substituted", info.home_substituted},
                         {"class_histogram", info.class_histogram}});
  }
  write_text(dir / "partition.json", partition.dump(2) + "\n");

  write_text(dir / "diagnostics.json", diagnostics_json(result).dump(2) + "\n");

  save_checkpoint((dir / "model.bin").string(), (dir / "model.json").string(),
                  result.theta, resolved.model);
  return artifacts;
}

namespace {

SweepRowSummary summarize_cell(const SweepSpec& spec, int value_index, int repeat,
                               ProtocolVariant variant, const RunArtifacts& artifacts) {
  SweepRowSummary row;
  row.axis = axis_name(spec.axis);
  row.value = spec.values[value_index];
  row.repeat = repeat;
  row.variant = variant_name(variant);
  row.seed = artifacts.result.resolved.master_seed;
  row.rounds = static_cast<int>(artifacts.result.records.size());
  row.diverged = artifacts.result.diverged;
  const auto& records = artifacts.result.records;
  if (!records.empty()) {
    row.final_loss = records.back().global_loss;
    row.final_grad_norm_sq = records.back().grad_norm_sq;
    row.final_accuracy = records.back().test_accuracy;
    const int window = std::min<int>(50, static_cast<int>(records.size()));
    double acc_sum = 0.0, loss_sum = 0.0;
    int acc_n = 0;
    for (int i = static_cast<int>(records.size()) - window;
         i < static_cast<int>(records.size()); ++i) {
      loss_sum += records[i].global_loss;
      if (std::isfinite(records[i].test_accuracy)) {
        acc_sum += records[i].test_accuracy;
        ++acc_n;
      }
    }
    row.window_loss = loss_sum / window;
    row.window_accuracy = acc_n > 0 ? acc_sum / acc_n
                                    : std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

}  // namespace

std::vector<SweepRowSummary> run_sweep(const SweepSpec& spec, const std::string& out_root,
                                       int jobs, std::ostream& log) {
  struct Cell {
    int value_index;
    int repeat;
    ProtocolVariant variant;
  };
  std::vector<Cell> cells;
  std::vector<ProtocolVariant> variants =
      spec.variants.empty() ? std::vector<ProtocolVariant>{spec.base.variant}
                            : spec.variants;
  for (int vi = 0; vi < static_cast<int>(spec.values.size()); ++vi)
    for (int rep = 0; rep < spec.repeats; ++rep)
      for (ProtocolVariant v : variants) cells.push_back({vi, rep, v});

  std::vector<SweepRowSummary> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr first_error;
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));

  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      try {
        RunConfig cfg = apply_sweep_cell(spec, cell.value_index, cell.repeat, cell.variant);
        std::ostringstream label;
        label << axis_name(spec.axis) << '-' << spec.values[cell.value_index] << "-r"
              << cell.repeat << '-' << variant_name(cell.variant);
        const std::string cell_dir = (fs::path(out_root) / ("cell-" + label.str())).string();
        RunArtifacts artifacts = execute_run(cfg, cell_dir, /*exact_dir=*/true, label.str(),
                                             cell.repeat, spec.values[cell.value_index]);
        rows[i] = summarize_cell(spec, cell.value_index, cell.repeat, cell.variant, artifacts);
        std::lock_guard<std::mutex> lock(log_mutex);
        log << "cell " << label.str() << ": final_acc=" << rows[i].final_accuracy
            << (rows[i].diverged ? " (diverged)" : "") << "\n";
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(cells.size());  // drain remaining work
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  fs::create_directories(out_root);
  write_text(fs::path(out_root) / "sweep_summary.csv", sweep_summary_csv(rows));
  return rows;
}

std::string sweep_summary_csv(const std::vector<SweepRowSummary>& rows) {
  std::ostringstream os;
  os << "axis,value,repeat,variant,seed,rounds,final_loss,final_grad_norm_sq,"
        "final_accuracy,window_loss,window_accuracy,diverged\n";
  for (const auto& row : rows) {
    os << row.axis << ',' << fmt_g(row.value) << ',' << row.repeat << ',' << row.variant
       << ',' << row.seed << ',' << row.rounds << ',' << fmt_g(row.final_loss) << ','
       << fmt_g(row.final_grad_norm_sq) << ',' << fmt_g(row.final_accuracy) << ','
       << fmt_g(row.window_loss) << ',' << fmt_g(row.window_accuracy) << ','
       << (row.diverged ? 1 : 0) << "\n";
  }
  return os.str();
}

bool verify_channel(const ChannelVerifyConfig& cfg, std::ostream& out) {
  if (cfg.trials < 10000)
    throw std::invalid_argument("verify_channel: need at least 10^4 trials");
  bool ok = true;
  char line[256];

  auto report = [&](const char* name, double measured, double expected, double tol) {
    const double rel = expected != 0.0 ? std::abs(measured - expected) / expected
                                       : std::abs(measured);
    const bool pass = rel <= tol;
    std::snprintf(line, sizeof(line), "%-28s measured=%.6g expected=%.6g rel_err=%.3g %s\n",
                  name, measured, expected, rel, pass ? "ok" : "FAIL");
    out << line;
    ok = ok && pass;
  };

  const ParamVector zero(1, 0.0);

  // Decoded-noise variance, full participation: sigma^2 / (K^2 p).
  {
    Rng rng(derive_seed(cfg.seed, Stream::Noise, 1));
    double sum = 0.0, sum_sq = 0.0;
    std::vector<std::vector<double>> silent{{0.0}};
    for (long i = 0; i < cfg.trials; ++i) {
      auto y = mac_superpose(silent, cfg.sigma2, rng);
      double w = decode_full(y, cfg.full_clients, cfg.full_p, zero)[0];
      sum += w;
      sum_sq += w * w;
    }
    const double var = sum_sq / cfg.trials - (sum / cfg.trials) * (sum / cfg.trials);
    const double expected =
        cfg.sigma2 / (static_cast<double>(cfg.full_clients) * cfg.full_clients * cfg.full_p);
    if (cfg.sigma2 == 0.0) {
      report("full decode var (sigma=0)", var, 0.0, 0.0);
    } else {
      report("full decode var", var, expected, 0.05);
    }
  }

  // Decoded-noise variance, partial participation: sigma^2 / (K_hat^2 p).
  {
    Rng rng(derive_seed(cfg.seed, Stream::Noise, 2));
    double sum = 0.0, sum_sq = 0.0;
    std::vector<std::vector<double>> silent{{0.0}};
    for (long i = 0; i < cfg.trials; ++i) {
      auto y = mac_superpose(silent, cfg.sigma2, rng);
      double w = decode_partial(y, cfg.partial_subset, cfg.full_p, zero)[0];
      sum += w;
      sum_sq += w * w;
    }
    const double var = sum_sq / cfg.trials - (sum / cfg.trials) * (sum / cfg.trials);
    const double expected = cfg.sigma2 / (static_cast<double>(cfg.partial_subset) *
                                          cfg.partial_subset * cfg.full_p);
    if (cfg.sigma2 == 0.0) {
      report("partial decode var (sigma=0)", var, 0.0, 0.0);
    } else {
      report("partial decode var", var, expected, 0.05);
    }
  }

  // Decoded-noise variance, fading: sigma^2 / (r_hat^2 |K|^2 p).
  {
    Rng rng(derive_seed(cfg.seed, Stream::Noise, 3));
    double sum = 0.0, sum_sq = 0.0;
    std::vector<std::vector<double>> silent{{0.0}};
    for (long i = 0; i < cfg.trials; ++i) {
      auto y = mac_superpose(silent, cfg.sigma2, rng);
      double w =
          decode_fading(y, cfg.fading_r_hat, cfg.fading_participants, cfg.fading_p, zero)[0];
      sum += w;
      sum_sq += w * w;
    }
    const double var = sum_sq / cfg.trials - (sum / cfg.trials) * (sum / cfg.trials);
    const double expected =
        cfg.sigma2 / (cfg.fading_r_hat * cfg.fading_r_hat * cfg.fading_participants *
                      cfg.fading_participants * cfg.fading_p);
    if (cfg.sigma2 == 0.0) {
      report("fading decode var (sigma=0)", var, 0.0, 0.0);
    } else {
      report("fading decode var", var, expected, 0.05);
    }
  }

  // Rayleigh magnitude law and threshold participation rate.
  {
    Rng rng(derive_seed(cfg.seed, Stream::Fading, 4));
    const int clients = 30;
    const double target = 20.0;
    const double r_hat = r_hat_for_expected_participants(clients, target);
    double r_sq_sum = 0.0;
    long participants = 0;
    const long rounds = cfg.trials / clients + 1;
    for (long i = 0; i < rounds; ++i) {
      auto draws = draw_fading(clients, rng);
      for (const auto& d : draws) {
        r_sq_sum += d.r * d.r;
        if (d.r > r_hat) ++participants;
      }
    }
    report("rayleigh E[r^2]", r_sq_sum / (rounds * clients), 1.0, 0.02);
    report("threshold participation", static_cast<double>(participants) / rounds, target,
           0.03);
  }

  // Power constraint with oracle precoding: sum_k q_k ||x_k||^2 = P.
  {
    Rng rng(derive_seed(cfg.seed, Stream::Noise, 5));
    const int clients = 7;
    const int dim = 5;
    std::vector<double> weights(clients), norms_sq(clients);
    std::vector<ParamVector> deltas(clients, ParamVector(dim));
    double wsum = 0.0;
    for (int k = 0; k < clients; ++k) {
      weights[k] = 0.1 + rng.uniform();
      wsum += weights[k];
    }
    for (auto& w : weights) w /= wsum;
    ParamVector prev(dim, 0.0);
    for (int k = 0; k < clients; ++k) {
      for (int j = 0; j < dim; ++j) deltas[k].values[j] = rng.normal();
      norms_sq[k] = norm_sq(deltas[k]);
    }
    const double p_t = compute_precoding_factor(norms_sq, weights, cfg.power);
    double spent = 0.0;
    for (int k = 0; k < clients; ++k) {
      auto x = encode(deltas[k], prev, p_t);
      double e = 0.0;
      for (double v : x) e += v * v;
      spent += weights[k] * e;
    }
    const double residual = std::abs(spent - cfg.power);
    std::snprintf(line, sizeof(line), "%-28s residual=%.3g %s\n", "power constraint",
                  residual, residual <= 1e-9 ? "ok" : "FAIL");
    out << line;
    ok = ok && residual <= 1e-9;
  }

  return ok;
}

std::string emit_plot_data(const std::vector<std::string>& run_dirs,
                           const std::string& metric, std::ostream& log) {
  static const std::map<std::string, int> columns = {
      {"loss", 1}, {"grad_norm_sq", 2}, {"accuracy", 3}, {"p_t", 4}};
  auto col_it = columns.find(metric);
  if (col_it == columns.end())
    throw std::invalid_argument("emit_plot_data: unknown metric '" + metric +
                                "' (use loss|grad_norm_sq|accuracy|p_t)");
  const int col = col_it->second;

  struct Series {
    std::string variant;
    int repeat;
    std::vector<double> values;
  };
  std::vector<Series> series;
  std::size_t min_rounds = SIZE_MAX;

  for (const auto& dir : run_dirs) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf)
      throw std::runtime_error("emit_plot_data: missing manifest in directory " + dir);
    json manifest = json::parse(mf);
    Series s;
    s.variant = manifest.at("variant").get<std::string>();
    s.repeat = manifest.value("repeat", 0);

    std::ifstream csv(fs::path(dir) / "rounds.csv");
    if (!csv) throw std::runtime_error("emit_plot_data: missing rounds.csv in " + dir);
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
      std::stringstream ss(line);
      std::string field;
      int c = 0;
      double value = std::numeric_limits<double>::quiet_NaN();
      while (std::getline(ss, field, ',')) {
        if (c == col) value = std::strtod(field.c_str(), nullptr);
        ++c;
      }
      s.values.push_back(value);
    }
    min_rounds = std::min(min_rounds, s.values.size());
    series.push_back(std::move(s));
  }
  if (series.empty()) throw std::invalid_argument("emit_plot_data: no run directories");

  for (const auto& s : series)
    if (s.values.size() > min_rounds)
      log << "warning: " << s.variant << " truncated from " << s.values.size() << " to "
          << min_rounds << " rounds\n";

  std::ostringstream os;
  os << "variant,round,repeat,value\n";
  for (const auto& s : series)
    for (std::size_t t = 0; t < min_rounds; ++t)
      os << s.variant << ',' << (t + 1) << ',' << s.repeat << ',' << fmt_g(s.values[t])
         << "\n";
  return os.str();
}

}  // namespace otafl
