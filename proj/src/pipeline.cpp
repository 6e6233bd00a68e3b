#include "mirrorfdr/pipeline.hpp"

#include <algorithm>

namespace mirrorfdr {

Estimation run_estimation(const Dataset& ds, const PipelineConfig& cfg) {
  cfg.trim.validate();
  Estimation est;
  est.data = scale_covariates(ds);
  const bool need_retained = cfg.keep_retained || cfg.null_source == NullSource::retained;
  est.centers = estimate_all_centers(est.data, cfg.trim, cfg.threads, need_retained);
  est.pvalues = all_pvalues(est.data, est.centers, cfg.trim.query, cfg.null_source, cfg.threads);
  return est;
}

std::vector<double> pretrain_targets(const Estimation& est, const PipelineConfig& cfg) {
  auto at_t0 = pvalues_at(est.data, est.centers, cfg.trim.query, est.centers.t0, cfg.null_source,
                          cfg.threads);
  for (auto& v : at_t0.p) v = std::clamp(v, 0.01, 0.99);
  return std::move(at_t0.p);
}

ThresholdNet pretrained_net(const Estimation& est, const PipelineConfig& cfg, double* final_mse) {
  auto net = ThresholdNet::default_for(est.data.dim(), cfg.train.seed);
  const auto targets = pretrain_targets(est, cfg);
  const double mse = pretrain(net, est.pvalue_data(), targets, cfg.train.pretrain_epochs,
                              cfg.train.learning_rate);
  if (final_mse) *final_mse = mse;
  return net;
}

ThresholdFit fit_threshold(const Estimation& est, const ThresholdNet& start,
                           const PipelineConfig& cfg) {
  ThresholdFit fit{start, 0.0, {}, {}};
  const auto data = est.pvalue_data();
  if (cfg.train.alpha == 0.0) {
    fit.outcome.shrink = 0.0;
    fit.result = rejections(std::vector<double>(data.size(), 0.0), data.p);
    return fit;
  }
  fit.outcome = train(fit.net, data, cfg.train);
  fit.result = rejections(fit.net, data, fit.outcome.shrink);
  return fit;
}

}  // namespace mirrorfdr
