#pragma once

#include <cstddef>
#include <vector>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/mirror_pvalues.hpp"
#include "mirrorfdr/threshold_net.hpp"
#include "mirrorfdr/trimming.hpp"

namespace mirrorfdr {

/// Everything the estimate -> p-value -> threshold chain needs.
struct PipelineConfig {
  TrimConfig trim;
  NullSource null_source = NullSource::neighborhood;
  TrainConfig train;
  std::size_t threads = 1;
  bool keep_retained = true;
};

struct Estimation {
  Dataset data;  // covariates scaled to [0,1]
  CenterEstimates centers;
  PValueVector pvalues;

  PValueData pvalue_data() const { return {data.dim(), data.covariates(), pvalues.p}; }
};

/// Scales covariates, estimates every centre and derives the mirror p-values.
Estimation run_estimation(const Dataset& ds, const PipelineConfig& cfg);

/// Initial thresholds t0 expressed on the p-value scale through each row's
/// own mirror null, clamped to [0.01, 0.99].
std::vector<double> pretrain_targets(const Estimation& est, const PipelineConfig& cfg);

struct ThresholdFit {
  ThresholdNet net;
  double pretrain_mse = 0.0;
  TrainOutcome outcome;
  RejectionResult result;
};

/// Network initialised from the train seed and pretrained towards t0.
ThresholdNet pretrained_net(const Estimation& est, const PipelineConfig& cfg,
                            double* final_mse = nullptr);

/// Trains a copy of `start` at cfg.train.alpha and applies the indicator
/// rejection rule. alpha == 0 short-circuits to no rejections.
ThresholdFit fit_threshold(const Estimation& est, const ThresholdNet& start,
                           const PipelineConfig& cfg);

}  // namespace mirrorfdr
