#pragma once

namespace mirrorfdr {

double normal_cdf(double z);

/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double prob);

/// Quantile of Beta(a, b) on (0, 1).
double beta_quantile(double prob, double a, double b);

/// Quantile of N(mean, variance) truncated to mean +- zcut * sqrt(variance).
/// Throws ValidationError unless q in (0, 1), variance > 0 and zcut > 0.
double truncnorm_quantile(double q, double mean, double variance, double zcut);

}  // namespace mirrorfdr
