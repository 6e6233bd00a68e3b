#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mirrorfdr/errors.hpp"

namespace mirrorfdr {

/// Covariates (row-major, n x dim, scaled to [0,1]) paired with p-values.
struct PValueData {
  std::size_t dim = 1;
  std::span<const double> covariates;
  std::span<const double> p;

  std::size_t size() const { return p.size(); }
  std::span<const double> x(std::size_t i) const { return covariates.subspan(i * dim, dim); }
};

/// Feed-forward threshold network: `depth` affine layers, tanh on hidden
/// layers, logistic sigmoid on the scalar output. All parameters live in one
/// flat vector (weights row-major per layer, then biases).
class ThresholdNet {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weights = 0;  // offset of the out x in weight block
    std::size_t biases = 0;   // offset of the out-length bias block
  };

  /// All-zero parameters.
  ThresholdNet(std::size_t input_dim, std::size_t depth, std::size_t width);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from `seed`.
  static ThresholdNet initialized(std::size_t input_dim, std::size_t depth, std::size_t width,
                                  std::uint64_t seed);

  /// Two layers for one covariate, three otherwise; width 32.
  static ThresholdNet default_for(std::size_t input_dim, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t depth() const { return layers_.size(); }
  std::size_t width() const { return width_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// t(x) in (0, 1). Throws ValidationError on dimension mismatch.
  double forward(std::span<const double> x) const;

  /// Activations of every sample from one full-batch pass.
  struct BatchCache {
    std::size_t n = 0;
    std::vector<std::vector<double>> hidden;  // per hidden layer, n x width
    std::vector<double> t;
  };

  void forward_batch(const PValueData& data, BatchCache& cache) const;

  /// Accumulates sum_i upstream[i] * dt_i/dparams into `grad` (not cleared).
  void backward_batch(const PValueData& data, const BatchCache& cache,
                      std::span<const double> upstream, std::span<double> grad) const;

 private:
  std::size_t input_dim_;
  std::size_t width_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

struct TrainConfig {
  double alpha = 0.1;
  double lambda_sharp = 1000.0;
  double lambda2_init = 0.0;
  double rho = 1.0;
  double eta = 0.1;
  std::size_t epochs = 500;
  std::size_t pretrain_epochs = 200;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  /// After training, shrink t(x) by the largest factor in (0, 1] whose
  /// indicator FDP estimate is within alpha.
  bool enforce_fdp = true;

  void validate() const;
};

struct SurrogateCounts {
  double R_sigma = 0.0;
  double V_sigma = 0.0;
  double FDP_sigma = 0.0;
};

/// Sigmoid-relaxed rejection and mirror false-rejection counts.
SurrogateCounts surrogate_counts(const ThresholdNet& net, const PValueData& data,
                                 double lambda_sharp);

/// -R + lambda2 (V - alpha R) + rho/2 (V - alpha R)^2.
double lagrangian_loss(const SurrogateCounts& counts, double lambda2, double rho, double alpha);

/// Loss and its gradient with respect to every network parameter.
double loss_gradient(const ThresholdNet& net, const PValueData& data, double lambda_sharp,
                     double lambda2, double rho, double alpha, std::span<double> grad,
                     SurrogateCounts* counts = nullptr);

/// Fits t(x_j) to targets by full-batch Adam on the mean squared error.
/// Returns the final MSE. Throws NumericalError on a non-finite loss.
double pretrain(ThresholdNet& net, const PValueData& data, std::span<const double> targets,
                std::size_t epochs, double learning_rate);

struct TraceRow {
  std::size_t epoch = 0;
  double R_sigma = 0.0;
  double V_sigma = 0.0;
  double FDP_sigma = 0.0;
  double lambda2 = 0.0;
  double loss = 0.0;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<TraceRow> trace)
      : NumericalError(what), trace(std::move(trace)) {}
  std::vector<TraceRow> trace;
};

struct TrainOutcome {
  std::vector<TraceRow> trace;
  double lambda2 = 0.0;
  double shrink = 1.0;  // factor applied by enforce_fdp
};

/// Augmented-Lagrangian training with full-batch Adam steps. lambda2 is
/// updated once per epoch from that epoch's counts and never goes negative.
TrainOutcome train(ThresholdNet& net, const PValueData& data, const TrainConfig& cfg);

struct RejectionResult {
  std::vector<std::size_t> rejected;  // ascending row indices
  std::size_t R = 0;
  std::size_t V_hat = 0;
  double FDP_hat = 0.0;
  std::vector<double> threshold_at;
};

/// Indicator counts: reject p_i < t_i, V_hat = #{p_i > 1 - t_i}.
RejectionResult rejections(std::span<const double> thresholds, std::span<const double> p);
RejectionResult rejections(const ThresholdNet& net, const PValueData& data, double shrink = 1.0);

/// Largest c in [0, 1] such that thresholds c * t_i give FDP_hat <= alpha.
double fdp_feasible_shrink(std::span<const double> thresholds, std::span<const double> p,
                           double alpha);

}  // namespace mirrorfdr
