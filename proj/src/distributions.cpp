#include "mirrorfdr/distributions.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>

#include "mirrorfdr/errors.hpp"

namespace mirrorfdr {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("normal_quantile: prob outside (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
}

double beta_quantile(double prob, double a, double b) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("beta_quantile: prob outside (0, 1)");
  if (!(a > 0.0 && b > 0.0)) throw ValidationError("beta_quantile: shapes must be positive");
  return boost::math::ibeta_inv(a, b, prob);
}

double truncnorm_quantile(double q, double mean, double variance, double zcut) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("truncnorm_quantile: q outside (0, 1)");
  if (!(variance > 0.0)) throw ValidationError("truncnorm_quantile: variance must be positive");
  if (!(zcut > 0.0)) throw ValidationError("truncnorm_quantile: zcut must be positive");
  if (q == 0.5) return mean;
  const double sd = std::sqrt(variance);
  const double tail = normal_cdf(-zcut);
  const double mass = 1.0 - 2.0 * tail;
  // Work from the nearer tail so q close to 1 keeps its precision.
  if (q <= 0.5) return mean + sd * normal_quantile(tail + q * mass);
  return mean - sd * normal_quantile(tail + (1.0 - q) * mass);
}

}  // namespace mirrorfdr
