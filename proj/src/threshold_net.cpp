#include "mirrorfdr/threshold_net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mirrorfdr/random.hpp"

namespace mirrorfdr {

namespace {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Full-batch Adam with the usual constants.
class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grad[k];
      v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grad[k] * grad[k];
      params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_data(const ThresholdNet& net, const PValueData& data) {
  if (data.dim != net.input_dim())
    throw ValidationError("threshold net: covariate dimension " + std::to_string(data.dim) +
                          " does not match network input " + std::to_string(net.input_dim()));
  if (data.covariates.size() != data.dim * data.p.size())
    throw ValidationError("threshold net: covariates do not match p-value count");
}

}  // namespace

ThresholdNet::ThresholdNet(std::size_t input_dim, std::size_t depth, std::size_t width)
    : input_dim_(input_dim), width_(width) {
  if (input_dim == 0 || depth == 0 || (depth > 1 && width == 0))
    throw ValidationError("threshold net: input dimension, depth and width must be positive");
  std::size_t offset = 0;
  for (std::size_t k = 0; k < depth; ++k) {
    Layer layer;
    layer.in = k == 0 ? input_dim : width;
    layer.out = k + 1 == depth ? 1 : width;
    layer.weights = offset;
    offset += layer.in * layer.out;
    layer.biases = offset;
    offset += layer.out;
    layers_.push_back(layer);
  }
  params_.assign(offset, 0.0);
}

ThresholdNet ThresholdNet::initialized(std::size_t input_dim, std::size_t depth, std::size_t width,
                                       std::uint64_t seed) {
  ThresholdNet net(input_dim, depth, width);
  Rng rng(seed);
  for (const auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (std::size_t k = 0; k < layer.in * layer.out + layer.out; ++k)
      net.params_[layer.weights + k] = rng.uniform(-bound, bound);
  }
  return net;
}

ThresholdNet ThresholdNet::default_for(std::size_t input_dim, std::uint64_t seed) {
  return initialized(input_dim, input_dim == 1 ? 2 : 3, 32, seed);
}

double ThresholdNet::forward(std::span<const double> x) const {
  if (x.size() != input_dim_)
    throw ValidationError("threshold net: input has dimension " + std::to_string(x.size()) +
                          ", expected " + std::to_string(input_dim_));
  std::vector<double> in(x.begin(), x.end());
  std::vector<double> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    out.assign(layer.out, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double z = params_[layer.biases + o];
      const double* w = &params_[layer.weights + o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * in[i];
      out[o] = k + 1 == layers_.size() ? logistic(z) : std::tanh(z);
    }
    std::swap(in, out);
  }
  return in[0];
}

void ThresholdNet::forward_batch(const PValueData& data, BatchCache& cache) const {
  check_data(*this, data);
  const std::size_t n = data.size();
  const std::size_t hidden_layers = layers_.size() - 1;
  cache.n = n;
  cache.hidden.resize(hidden_layers);
  for (auto& h : cache.hidden) h.resize(n * width_);
  cache.t.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double* in = data.covariates.data() + s * input_dim_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& layer = layers_[k];
      const bool last = k == hidden_layers;
      double* out = last ? &cache.t[s] : &cache.hidden[k][s * width_];
      for (std::size_t o = 0; o < layer.out; ++o) {
        double z = params_[layer.biases + o];
        const double* w = &params_[layer.weights + o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * in[i];
        out[o] = last ? logistic(z) : std::tanh(z);
      }
      in = out;
    }
  }
}

void ThresholdNet::backward_batch(const PValueData& data, const BatchCache& cache,
                                  std::span<const double> upstream, std::span<double> grad) const {
  std::vector<double> delta(std::max<std::size_t>(width_, 1));
  std::vector<double> next(std::max<std::size_t>(width_, 1));
  for (std::size_t s = 0; s < cache.n; ++s) {
    const double t = cache.t[s];
    delta[0] = upstream[s] * t * (1.0 - t);
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& layer = layers_[k];
      const double* in = k == 0 ? data.covariates.data() + s * input_dim_
                                : &cache.hidden[k - 1][s * width_];
      if (k > 0) std::fill(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(layer.in), 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double d = delta[o];
        grad[layer.biases + o] += d;
        const double* w = &params_[layer.weights + o * layer.in];
        double* g = &grad[layer.weights + o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) {
          g[i] += d * in[i];
          if (k > 0) next[i] += d * w[i];
        }
      }
      if (k > 0) {
        // Hidden activations are tanh: derivative 1 - a^2.
        for (std::size_t i = 0; i < layer.in; ++i) next[i] *= 1.0 - in[i] * in[i];
        std::swap(delta, next);
      }
    }
  }
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("train: alpha must lie in (0, 1)");
  if (!(lambda_sharp > 0.0)) throw ValidationError("train: lambda_sharp must be positive");
  if (!(lambda2_init >= 0.0)) throw ValidationError("train: lambda2_init must be nonnegative");
  if (!(rho > 0.0)) throw ValidationError("train: rho must be positive");
  if (!(eta > 0.0)) throw ValidationError("train: eta must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
}

namespace {

SurrogateCounts counts_from(std::span<const double> ts, std::span<const double> p,
                            double lambda_sharp) {
  SurrogateCounts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.R_sigma += logistic(lambda_sharp * (ts[i] - p[i]));
    c.V_sigma += logistic(lambda_sharp * (p[i] - (1.0 - ts[i])));
  }
  c.FDP_sigma = c.R_sigma > 0.0 ? c.V_sigma / c.R_sigma : 0.0;
  return c;
}

}  // namespace

SurrogateCounts surrogate_counts(const ThresholdNet& net, const PValueData& data,
                                 double lambda_sharp) {
  ThresholdNet::BatchCache cache;
  net.forward_batch(data, cache);
  return counts_from(cache.t, data.p, lambda_sharp);
}

double lagrangian_loss(const SurrogateCounts& counts, double lambda2, double rho, double alpha) {
  const double g = counts.V_sigma - alpha * counts.R_sigma;
  return -counts.R_sigma + lambda2 * g + 0.5 * rho * g * g;
}

namespace {

double loss_gradient_cached(const ThresholdNet& net, const PValueData& data, double lambda_sharp,
                            double lambda2, double rho, double alpha, std::span<double> grad,
                            SurrogateCounts& counts, ThresholdNet::BatchCache& cache,
                            std::vector<double>& upstream) {
  net.forward_batch(data, cache);
  counts = counts_from(cache.t, data.p, lambda_sharp);
  const double g = counts.V_sigma - alpha * counts.R_sigma;
  const double dL_dR = -1.0 - alpha * (lambda2 + rho * g);
  const double dL_dV = lambda2 + rho * g;
  upstream.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double t = cache.t[i];
    const double p = data.p[i];
    const double sr = logistic(lambda_sharp * (t - p));
    const double sv = logistic(lambda_sharp * (p - (1.0 - t)));
    upstream[i] = lambda_sharp * (dL_dR * sr * (1.0 - sr) + dL_dV * sv * (1.0 - sv));
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  net.backward_batch(data, cache, upstream, grad);
  return lagrangian_loss(counts, lambda2, rho, alpha);
}

}  // namespace

double loss_gradient(const ThresholdNet& net, const PValueData& data, double lambda_sharp,
                     double lambda2, double rho, double alpha, std::span<double> grad,
                     SurrogateCounts* counts_out) {
  ThresholdNet::BatchCache cache;
  std::vector<double> upstream;
  SurrogateCounts counts;
  const double loss = loss_gradient_cached(net, data, lambda_sharp, lambda2, rho, alpha, grad,
                                           counts, cache, upstream);
  if (counts_out) *counts_out = counts;
  return loss;
}

double pretrain(ThresholdNet& net, const PValueData& data, std::span<const double> targets,
                std::size_t epochs, double learning_rate) {
  if (targets.size() != data.size())
    throw ValidationError("pretrain: target count does not match data");
  if (data.size() == 0) throw ValidationError("pretrain: no data");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  Adam adam(net.parameters().size(), learning_rate);
  std::vector<double> grad(net.parameters().size());
  std::vector<double> upstream(data.size());
  ThresholdNet::BatchCache cache;

  auto mse_of = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double e = cache.t[i] - targets[i];
      acc += e * e;
    }
    return acc * inv_n;
  };

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    net.forward_batch(data, cache);
    const double mse = mse_of();
    for (std::size_t i = 0; i < data.size(); ++i)
      upstream[i] = 2.0 * (cache.t[i] - targets[i]) * inv_n;
    std::fill(grad.begin(), grad.end(), 0.0);
    net.backward_batch(data, cache, upstream, grad);
    if (!std::isfinite(mse) || !all_finite(grad))
      throw NumericalError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
    adam.step(net.parameters(), grad);
  }
  net.forward_batch(data, cache);
  const double final_mse = mse_of();
  if (!std::isfinite(final_mse)) throw NumericalError("pretrain: non-finite final loss");
  return final_mse;
}

TrainOutcome train(ThresholdNet& net, const PValueData& data, const TrainConfig& cfg) {
  cfg.validate();
  check_data(net, data);
  if (data.size() == 0) throw ValidationError("train: no data");
  TrainOutcome out;
  double lambda2 = cfg.lambda2_init;
  Adam adam(net.parameters().size(), cfg.learning_rate);
  std::vector<double> grad(net.parameters().size());
  ThresholdNet::BatchCache cache;
  std::vector<double> upstream;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SurrogateCounts counts;
    const double loss = loss_gradient_cached(net, data, cfg.lambda_sharp, lambda2, cfg.rho,
                                             cfg.alpha, grad, counts, cache, upstream);
    out.trace.push_back({epoch, counts.R_sigma, counts.V_sigma, counts.FDP_sigma, lambda2, loss});
    if (!std::isfinite(loss) || !all_finite(grad))
      throw TrainingDiverged("train: non-finite loss or gradient at epoch " + std::to_string(epoch),
                             std::move(out.trace));
    adam.step(net.parameters(), grad);
    if (!all_finite(net.parameters()))
      throw TrainingDiverged("train: non-finite parameters at epoch " + std::to_string(epoch),
                             std::move(out.trace));
    lambda2 = std::max(0.0, lambda2 + cfg.eta * (counts.V_sigma - cfg.alpha * counts.R_sigma));
  }
  out.lambda2 = lambda2;

  if (cfg.enforce_fdp) {
    net.forward_batch(data, cache);
    out.shrink = fdp_feasible_shrink(cache.t, data.p, cfg.alpha);
  }
  return out;
}

RejectionResult rejections(std::span<const double> thresholds, std::span<const double> p) {
  if (thresholds.size() != p.size())
    throw ValidationError("rejections: threshold count does not match p-values");
  RejectionResult r;
  r.threshold_at.assign(thresholds.begin(), thresholds.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < thresholds[i]) r.rejected.push_back(i);
    if (p[i] > 1.0 - thresholds[i]) ++r.V_hat;
  }
  r.R = r.rejected.size();
  r.FDP_hat = r.R == 0 ? 0.0 : static_cast<double>(r.V_hat) / static_cast<double>(r.R);
  return r;
}

RejectionResult rejections(const ThresholdNet& net, const PValueData& data, double shrink) {
  ThresholdNet::BatchCache cache;
  net.forward_batch(data, cache);
  for (auto& t : cache.t) t *= shrink;
  return rejections(cache.t, data.p);
}

double fdp_feasible_shrink(std::span<const double> thresholds, std::span<const double> p,
                           double alpha) {
  auto feasible = [&](double c) {
    std::size_t R = 0;
    std::size_t V = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double t = c * thresholds[i];
      if (p[i] < t) ++R;
      if (p[i] > 1.0 - t) ++V;
    }
    return static_cast<double>(V) <= alpha * static_cast<double>(R);
  };
  if (feasible(1.0)) return 1.0;

  // R(c) and V(c) only change where c * t_i crosses p_i or 1 - p_i; the
  // largest feasible c is one of those crossings.
  std::vector<double> candidates;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(thresholds[i] > 0.0)) continue;
    const double r = p[i] / thresholds[i];
    const double v = (1.0 - p[i]) / thresholds[i];
    if (r < 1.0) candidates.push_back(r);
    if (v < 1.0) candidates.push_back(v);
  }
  std::vector<double> rs;
  std::vector<double> vs;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(thresholds[i] > 0.0)) continue;
    rs.push_back(p[i] / thresholds[i]);
    vs.push_back((1.0 - p[i]) / thresholds[i]);
  }
  std::sort(rs.begin(), rs.end());
  std::sort(vs.begin(), vs.end());
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (double c : candidates) {
    const auto R = static_cast<double>(std::lower_bound(rs.begin(), rs.end(), c) - rs.begin());
    const auto V = static_cast<double>(std::lower_bound(vs.begin(), vs.end(), c) - vs.begin());
    if (V <= alpha * R && feasible(c)) return c;
  }
  return 0.0;
}

}  // namespace mirrorfdr
