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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "otafl/config.hpp"
#include "otafl/harness.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

std::string default_out_root() {
  const char* env = std::getenv("OTA_FL_SIM_OUT");
  return env && *env ? std::string(env) : std::string("out");
}

otafl::RunConfig load_run_config(const std::string& path, std::uint64_t* seed_override) {
  auto map = otafl::ConfigMap::parse_file(path);
  otafl::RunConfig cfg = otafl::run_config_from_map(map);
  map.reject_unused();
  if (seed_override) cfg.master_seed = *seed_override;
  otafl::validate_run_config(otafl::variant_config(cfg.variant, cfg));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"otafl: over-the-air federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_root = default_out_root();
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "path to a flat key=value config");
    if (needs_config) opt->required();
    sub->add_option("--out", out_root, "output root (default $OTA_FL_SIM_OUT or ./out)");
    sub->add_option("--jobs", jobs, "worker pool size for sweeps");
    sub->add_option("--seed-override", seed_override, "replace master_seed from the config")
        ->each([&](const std::string&) { have_seed_override = true; });
  };

  auto* run_cmd = app.add_subcommand("run", "execute one training run");
  add_common(run_cmd, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "run a sweep over one experiment axis");
  add_common(sweep_cmd, true);

  auto* compare_cmd =
      app.add_subcommand("compare", "run several variants against one shared base config");
  add_common(compare_cmd, true);
  std::vector<std::string> compare_variants;
  compare_cmd->add_option("--variants", compare_variants,
                          "variant names (default: compare.variants from the config)");
  std::string compare_metric = "accuracy";
  compare_cmd->add_option("--metric", compare_metric, "metric for the combined CSV");

  auto* verify_cmd = app.add_subcommand("verify-channel", "Monte-Carlo channel-law checks");
  add_common(verify_cmd, false);
  long trials = 100000;
  verify_cmd->add_option("--trials", trials, "Monte-Carlo rounds (>= 10^4)");

  auto* emit_cmd =
      app.add_subcommand("emit-plot-data", "merge run directories into a long-format CSV");
  std::vector<std::string> run_dirs;
  std::string emit_metric = "accuracy";
  emit_cmd->add_option("dirs", run_dirs, "run directories")->required();
  emit_cmd->add_option("--metric", emit_metric, "loss|grad_norm_sq|accuracy|p_t");
  emit_cmd->add_option("--out", out_root, "output root");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      otafl::RunConfig cfg =
          load_run_config(config_path, have_seed_override ? &seed_override : nullptr);
      auto artifacts = otafl::execute_run(cfg, out_root);
      if (artifacts.result.diverged) {
        std::cerr << "run diverged at round " << artifacts.result.diverged_round << "\n";
        std::cout << artifacts.dir << "\n";
        return kExitDiverged;
      }
      std::cout << artifacts.dir << "\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      auto map = otafl::ConfigMap::parse_file(config_path);
      otafl::SweepSpec spec = otafl::sweep_from_map(map);
      map.reject_unused();
      if (have_seed_override) spec.base.master_seed = seed_override;
      const std::string sweep_dir =
          (std::filesystem::path(out_root) /
           ("sweep-" + otafl::to_hex(otafl::fnv1a64(otafl::serialize_run_config(spec.base) +
                                                    otafl::axis_name(spec.axis)))))
              .string();
      auto rows = otafl::run_sweep(spec, sweep_dir, jobs, std::cerr);
      bool any_diverged = false;
      for (const auto& row : rows) any_diverged = any_diverged || row.diverged;
      std::cout << sweep_dir << "\n";
      return any_diverged ? kExitDiverged : 0;
    }

    if (compare_cmd->parsed()) {
      auto map = otafl::ConfigMap::parse_file(config_path);
      otafl::RunConfig base = otafl::run_config_from_map(map);
      std::vector<std::string> names = compare_variants;
      if (names.empty() && map.has("compare.variants"))
        names = map.get_string_list("compare.variants");
      map.reject_unused();
      if (names.empty())
        throw otafl::ConfigError("compare.variants", "no variants to compare");
      if (have_seed_override) base.master_seed = seed_override;

      const std::string cmp_dir =
          (std::filesystem::path(out_root) /
           ("compare-" + otafl::to_hex(otafl::fnv1a64(otafl::serialize_run_config(base)))))
              .string();
      std::vector<std::string> dirs;
      bool any_diverged = false;
      for (const auto& name : names) {
        auto v = otafl::variant_from_name(name);
        if (!v)
          throw otafl::ConfigError("compare.variants", "'" + name + "' is not a variant");
        otafl::RunConfig cfg = base;
        cfg.variant = *v;
        auto artifacts = otafl::execute_run(
            cfg, (std::filesystem::path(cmp_dir) / name).string(), /*exact_dir=*/true);
        any_diverged = any_diverged || artifacts.result.diverged;
        dirs.push_back(artifacts.dir);
      }
      const std::string merged = otafl::emit_plot_data(dirs, compare_metric, std::cerr);
      std::ofstream out(std::filesystem::path(cmp_dir) / ("compare_" + compare_metric + ".csv"));
      out << merged;
      std::cout << cmp_dir << "\n";
      return any_diverged ? kExitDiverged : 0;
    }

    if (verify_cmd->parsed()) {
      otafl::ChannelVerifyConfig vcfg;
      vcfg.trials = trials;
      if (!config_path.empty()) {
        auto map = otafl::ConfigMap::parse_file(config_path);
        vcfg.power = map.get_double("channel.P", vcfg.power);
        vcfg.sigma2 = map.get_double("channel.sigma2", vcfg.sigma2);
        vcfg.full_clients = map.get_int("verify.K", vcfg.full_clients);
        vcfg.full_p = map.get_double("verify.p_t", vcfg.full_p);
        vcfg.partial_clients = map.get_int("verify.partial_K", vcfg.partial_clients);
        vcfg.partial_subset = map.get_int("verify.K_hat", vcfg.partial_subset);
        vcfg.fading_participants = map.get_int("verify.fading_K", vcfg.fading_participants);
        vcfg.fading_r_hat = map.get_double("verify.r_hat", vcfg.fading_r_hat);
        vcfg.fading_p = map.get_double("verify.fading_p_t", vcfg.fading_p);
        vcfg.seed = map.get_u64("master_seed", vcfg.seed);
        map.reject_unused();
      }
      const bool ok = otafl::verify_channel(vcfg, std::cout);
      return ok ? 0 : 1;
    }

    if (emit_cmd->parsed()) {
      const std::string csv = otafl::emit_plot_data(run_dirs, emit_metric, std::cerr);
      std::cout << csv;
      return 0;
    }
  } catch (const otafl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const otafl::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
