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

#include "otafl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace otafl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

bool ParamVector::finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

double dot(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_sq(const ParamVector& a) { return dot(a, a); }
double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

void add_scaled(ParamVector& y, double alpha, const ParamVector& x) {
  if (y.size() != x.size()) throw std::invalid_argument("add_scaled: dimension mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += alpha * x[i];
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sub: dimension mismatch");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a[i] - b[i];
  return out;
}

std::vector<int> ModelSpec::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  if (kind == ModelKind::Mlp)
    for (int h : hidden) sizes.push_back(h);
  sizes.push_back(num_classes);
  return sizes;
}

int ModelSpec::param_count() const {
  auto sizes = layer_sizes();
  int d = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    d += sizes[l + 1] * sizes[l] + sizes[l + 1];
  return d;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector theta(static_cast<std::size_t>(spec.param_count()));
  if (spec.kind == ModelKind::MulticlassLogistic) return theta;
  Rng rng(derive_seed(seed, Stream::Init));
  auto sizes = spec.layer_sizes();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int fan_in = sizes[l], fan_out = sizes[l + 1];
    double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_out * fan_in; ++i) theta.values[off++] = rng.uniform(-s, s);
    off += fan_out;  // biases stay zero
  }
  return theta;
}

namespace {

void check_dims(const ParamVector& theta, const Dataset& ds, const ModelSpec& spec) {
  if (static_cast<int>(theta.size()) != spec.param_count())
    throw std::invalid_argument("model: parameter dimension mismatch");
  if (ds.m != spec.input_dim)
    throw std::invalid_argument("model: feature dimension mismatch");
  if (ds.num_classes > spec.num_classes)
    throw std::invalid_argument("model: dataset has more classes than the model");
}

inline double activate(double x, Activation a) {
  return a == Activation::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}
inline double activate_deriv(double pre, double post, Activation a) {
  return a == Activation::Tanh ? 1.0 - post * post : (pre > 0.0 ? 1.0 : 0.0);
}

// Softmax cross-entropy on logits z for label y; overwrites z with
// d(loss)/d(logits) when grad is requested.
double softmax_xent(std::vector<double>& z, int y, bool want_grad) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  double log_denom = zmax + std::log(sum);
  double loss = log_denom - z[y];
  if (want_grad) {
    for (auto& v : z) v = std::exp(v - log_denom);
    z[y] -= 1.0;
  }
  return loss;
}

}  // namespace

double model_loss_grad(const ParamVector& theta, const Dataset& ds,
                       const int* idx, int idx_count, const ModelSpec& spec,
                       ParamVector* grad) {
  check_dims(theta, ds, spec);
  const int count = idx ? idx_count : ds.n;
  if (count <= 0) throw std::invalid_argument("model_loss_grad: empty batch");
  if (grad) {
    grad->values.assign(theta.size(), 0.0);
  }

  const auto sizes = spec.layer_sizes();
  const int layers = static_cast<int>(sizes.size()) - 1;

  // Per-layer parameter offsets: [W(out x in) row-major | b(out)].
  std::vector<std::size_t> w_off(layers), b_off(layers);
  {
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
      w_off[l] = off;
      off += static_cast<std::size_t>(sizes[l + 1]) * sizes[l];
      b_off[l] = off;
      off += sizes[l + 1];
    }
  }

  std::vector<std::vector<double>> act(layers + 1), pre(layers);
  for (int l = 0; l < layers; ++l) pre[l].resize(sizes[l + 1]);
  std::vector<std::vector<double>> delta(layers);
  for (int l = 0; l < layers; ++l) delta[l].resize(sizes[l + 1]);

  double loss_sum = 0.0;
  for (int s = 0; s < count; ++s) {
    const int row_i = idx ? idx[s] : s;
    const double* x = ds.row(row_i);
    const int y = ds.labels[row_i];

    // Forward.
    const double* in = x;
    int in_dim = sizes[0];
    for (int l = 0; l < layers; ++l) {
      const int out_dim = sizes[l + 1];
      const double* W = theta.values.data() + w_off[l];
      const double* b = theta.values.data() + b_off[l];
      auto& z = pre[l];
      for (int o = 0; o < out_dim; ++o) {
        double acc = b[o];
        const double* wrow = W + static_cast<std::size_t>(o) * in_dim;
        for (int j = 0; j < in_dim; ++j) acc += wrow[j] * in[j];
        z[o] = acc;
      }
      if (l + 1 < layers) {
        auto& a = act[l + 1];
        a.resize(out_dim);
        for (int o = 0; o < out_dim; ++o) a[o] = activate(z[o], spec.activation);
        in = a.data();
        in_dim = out_dim;
      }
    }

    std::vector<double>& logits = delta[layers - 1];
    logits = pre[layers - 1];
    loss_sum += softmax_xent(logits, y, grad != nullptr);
    if (!grad) continue;

    // Backward. delta[l] holds d(loss)/d(pre-activation of layer l).
    for (int l = layers - 1; l >= 0; --l) {
      const int out_dim = sizes[l + 1];
      const int in_dim_l = sizes[l];
      const double* input = (l == 0) ? x : act[l].data();
      double* gW = grad->values.data() + w_off[l];
      double* gb = grad->values.data() + b_off[l];
      const auto& dl = delta[l];
      for (int o = 0; o < out_dim; ++o) {
        double* grow = gW + static_cast<std::size_t>(o) * in_dim_l;
        const double d = dl[o];
        for (int j = 0; j < in_dim_l; ++j) grow[j] += d * input[j];
        gb[o] += d;
      }
      if (l > 0) {
        const double* W = theta.values.data() + w_off[l];
        auto& dprev = delta[l - 1];
        for (int j = 0; j < in_dim_l; ++j) {
          double acc = 0.0;
          for (int o = 0; o < out_dim; ++o)
            acc += W[static_cast<std::size_t>(o) * in_dim_l + j] * dl[o];
          dprev[j] = acc * activate_deriv(pre[l - 1][j], act[l][j], spec.activation);
        }
      }
    }
  }

  if (grad)
    for (auto& g : grad->values) g /= count;
  return loss_sum / count;
}

int predict_class(const ParamVector& theta, const double* x, const ModelSpec& spec) {
  const auto sizes = spec.layer_sizes();
  const int layers = static_cast<int>(sizes.size()) - 1;
  std::vector<double> cur(x, x + sizes[0]), next;
  std::size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    const int in_dim = sizes[l], out_dim = sizes[l + 1];
    const double* W = theta.values.data() + off;
    const double* b = theta.values.data() + off + static_cast<std::size_t>(out_dim) * in_dim;
    next.assign(out_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
      double acc = b[o];
      const double* wrow = W + static_cast<std::size_t>(o) * in_dim;
      for (int j = 0; j < in_dim; ++j) acc += wrow[j] * cur[j];
      next[o] = (l + 1 < layers) ? activate(acc, spec.activation) : acc;
    }
    cur.swap(next);
    off += static_cast<std::size_t>(out_dim) * in_dim + out_dim;
  }
  int best = 0;
  for (int c = 1; c < sizes.back(); ++c)
    if (cur[c] > cur[best]) best = c;
  return best;
}

double local_loss(const ParamVector& theta, const ClientShard& shard,
                  const ModelSpec& spec) {
  return model_loss_grad(theta, shard.data, nullptr, 0, spec, nullptr);
}

ParamVector local_grad(const ParamVector& theta, const ClientShard& shard,
                       const ModelSpec& spec) {
  ParamVector g;
  model_loss_grad(theta, shard.data, nullptr, 0, spec, &g);
  return g;
}

double prox_objective(const ParamVector& theta, const ParamVector& theta_ref,
                      double lambda, const ClientShard& shard, const ModelSpec& spec) {
  if (theta.size() != theta_ref.size())
    throw std::invalid_argument("prox_objective: dimension mismatch");
  double quad = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double diff = theta[i] - theta_ref[i];
    quad += diff * diff;
  }
  return local_loss(theta, shard, spec) + 0.5 * lambda * quad;
}

ParamVector prox_grad(const ParamVector& theta, const ParamVector& theta_ref,
                      double lambda, const ClientShard& shard, const ModelSpec& spec) {
  if (theta.size() != theta_ref.size())
    throw std::invalid_argument("prox_grad: dimension mismatch");
  ParamVector g = local_grad(theta, shard, spec);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] += lambda * (theta[i] - theta_ref[i]);
  return g;
}

void ProxConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("ProxConfig: lambda must be >= 0");
  if (eta <= 0) throw std::invalid_argument("ProxConfig: eta must be > 0");
  if (max_epochs < 1) throw std::invalid_argument("ProxConfig: max_epochs must be >= 1");
  if (batch < 1) throw std::invalid_argument("ProxConfig: batch must be >= 1");
}

ParamVector local_solve_sgd(const ClientShard& shard, const ParamVector& theta_init,
                            const ProxConfig& cfg, int epochs, const ModelSpec& spec,
                            std::uint64_t seed) {
  cfg.validate();
  if (epochs < 1 || epochs > cfg.max_epochs)
    throw std::invalid_argument("local_solve_sgd: epochs must lie in [1, E]");
  const int n = shard.data.n;
  const int batch = std::min(cfg.batch, n);

  ParamVector theta = theta_init;
  ParamVector g;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < epochs; ++e) {
    // Epoch-keyed stream: running E+1 epochs replays the first E exactly.
    Rng rng(splitmix64(seed ^ (0x45504f43ULL + static_cast<std::uint64_t>(e))));
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      model_loss_grad(theta, shard.data, order.data() + start, count, spec, &g);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        double step = g[i] + cfg.lambda * (theta[i] - theta_init[i]);
        theta.values[i] -= cfg.eta * step;
      }
    }
    if (!theta.finite())
      throw DivergedError(e, "local_solve_sgd: non-finite iterate at epoch " +
                                 std::to_string(e));
  }
  return theta;
}

ProxSolveResult prox_minimize_gd(const ClientShard& shard, const ParamVector& theta_ref,
                                 const ParamVector& theta_init, double lambda,
                                 const ModelSpec& spec, int budget, double tol) {
  ParamVector theta = theta_init;
  double step = 1.0;
  ProxSolveResult res;
  for (int it = 0; it < budget; ++it) {
    ParamVector g = prox_grad(theta, theta_ref, lambda, shard, spec);
    double gn_sq = norm_sq(g);
    res.grad_norm = std::sqrt(gn_sq);
    res.iterations = it;
    if (res.grad_norm <= tol) break;
    double h0 = prox_objective(theta, theta_ref, lambda, shard, spec);
    step = std::min(step * 2.0, 1e6);  // warm-started backtracking
    bool moved = false;
    while (step > 1e-20) {
      ParamVector cand = theta;
      add_scaled(cand, -step, g);
      double hc = prox_objective(cand, theta_ref, lambda, shard, spec);
      if (hc <= h0 - 1e-4 * step * gn_sq) {
        theta = std::move(cand);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // no descent direction at float resolution
  }
  res.theta = std::move(theta);
  return res;
}

InexactnessReport measure_gamma(const ParamVector& theta_out, const ParamVector& theta_ref,
                                double lambda, const ClientShard& shard,
                                const ModelSpec& spec) {
  InexactnessReport rep;
  rep.residual_grad_norm = norm(prox_grad(theta_out, theta_ref, lambda, shard, spec));
  double ref_gn = norm(local_grad(theta_ref, shard, spec));
  if (ref_gn < 1e-12) {
    rep.stationary_reference = true;
    rep.gamma_hat = 0.0;
  } else {
    rep.gamma_hat = rep.residual_grad_norm / ref_gn;
  }
  return rep;
}

InexactnessReport measure_inexactness(const ParamVector& theta_out,
                                      const ParamVector& theta_ref, double lambda,
                                      const ClientShard& shard, const ModelSpec& spec,
                                      int oracle_budget) {
  InexactnessReport rep = measure_gamma(theta_out, theta_ref, lambda, shard, spec);
  rep.zeta_hat = measure_zeta(theta_out, theta_ref, lambda, shard, spec, oracle_budget);
  return rep;
}

double measure_zeta(const ParamVector& theta_out, const ParamVector& theta_ref,
                    double lambda, const ClientShard& shard, const ModelSpec& spec,
                    int oracle_budget) {
  ProxSolveResult oracle =
      prox_minimize_gd(shard, theta_ref, theta_ref, lambda, spec, oracle_budget, 1e-8);
  if (spec.kind == ModelKind::MulticlassLogistic && oracle.grad_norm > 1e-5)
    throw OracleError("measure_zeta: reference solve stalled at ||grad h|| = " +
                      std::to_string(oracle.grad_norm));
  double h_out = prox_objective(theta_out, theta_ref, lambda, shard, spec);
  double h_star = prox_objective(oracle.theta, theta_ref, lambda, shard, spec);
  double zeta = h_out - h_star;
  if (zeta < -1e-8 && spec.kind == ModelKind::MulticlassLogistic)
    throw OracleError("measure_zeta: candidate beats the reference solve by " +
                      std::to_string(-zeta));
  return std::max(zeta, 0.0);
}

void save_checkpoint(const std::string& bin_path, const std::string& json_path,
                     const ParamVector& theta, const ModelSpec& spec) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + bin_path);
  bin.write(reinterpret_cast<const char*>(theta.values.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));

  nlohmann::json j;
  j["kind"] = spec.kind == ModelKind::MulticlassLogistic ? "multiclass-logistic" : "mlp";
  j["m"] = spec.input_dim;
  j["C"] = spec.num_classes;
  j["hidden"] = spec.hidden;
  j["d"] = spec.param_count();
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("save_checkpoint: cannot open " + json_path);
  js << j.dump(2) << "\n";
}

std::pair<ParamVector, ModelSpec> load_checkpoint(const std::string& bin_path,
                                                  const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("load_checkpoint: cannot open " + json_path);
  nlohmann::json j = nlohmann::json::parse(js);
  ModelSpec spec;
  spec.kind = j.at("kind").get<std::string>() == "mlp" ? ModelKind::Mlp
                                                       : ModelKind::MulticlassLogistic;
  spec.input_dim = j.at("m").get<int>();
  spec.num_classes = j.at("C").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  const int d = j.at("d").get<int>();
  if (d != spec.param_count())
    throw std::runtime_error("load_checkpoint: sidecar d disagrees with architecture");

  ParamVector theta(static_cast<std::size_t>(d));
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + bin_path);
  bin.read(reinterpret_cast<char*>(theta.values.data()),
           static_cast<std::streamsize>(theta.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(theta.size() * sizeof(double)))
    throw std::runtime_error("load_checkpoint: short read from " + bin_path);
  return {std::move(theta), std::move(spec)};
}

}  // namespace otafl
