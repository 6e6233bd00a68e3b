#include "mirrorfdr/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mirrorfdr/errors.hpp"

namespace mirrorfdr {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double sorted_median(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

double gaussian_kde(std::span<const double> values, double point, double h) {
  double acc = 0.0;
  for (double v : values) {
    const double u = (point - v) / h;
    acc += std::exp(-0.5 * u * u);
  }
  return acc * kInvSqrt2Pi / (h * static_cast<double>(values.size()));
}

}  // namespace

double sample_median(std::span<const double> values) {
  if (values.empty()) throw ValidationError("sample_median: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return sorted_median(v);
}

double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw ValidationError("quantile: empty input");
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double silverman_bandwidth(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n < 2) throw IllConditionedError("silverman bandwidth: need at least 2 values");
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = (sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0.0)) spread = std::max(sd, iqr);
  if (!(spread > 0.0)) throw IllConditionedError("silverman bandwidth: zero spread");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double resolve_bandwidth(std::span<const double> sorted, const KdeConfig& kde) {
  if (kde.rule == KdeConfig::Bandwidth::fixed) {
    if (!(kde.fixed_h > 0.0)) throw ValidationError("kde: fixed bandwidth must be positive");
    return kde.fixed_h;
  }
  return silverman_bandwidth(sorted);
}

double kde_at(std::span<const double> values, double point, const KdeConfig& kde) {
  if (values.empty()) throw ValidationError("kde_at: empty input");
  double h = 0.0;
  if (kde.rule == KdeConfig::Bandwidth::fixed) {
    h = resolve_bandwidth(values, kde);
  } else {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    h = silverman_bandwidth(sorted);
  }
  return gaussian_kde(values, point, h);
}

SymmetryStats symmetry_stats(std::span<const double> values, const KdeConfig& kde) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return symmetry_stats_sorted(sorted, kde);
}

SymmetryStats symmetry_stats_sorted(std::span<const double> sorted, const KdeConfig& kde) {
  const std::size_t n = sorted.size();
  if (n < 2) throw DegenerateSampleError("symmetry_stats: need at least 2 values");
  const double nd = static_cast<double>(n);

  SymmetryStats s;
  s.N = n;
  s.nu_hat = sorted_median(sorted);

  // Centre on the median so every moment below is location invariant.
  double sum_c = 0.0;
  double abs_c = 0.0;
  double below_c = 0.0;
  for (double v : sorted) {
    const double c = v - s.nu_hat;
    sum_c += c;
    abs_c += std::abs(c);
    if (v < s.nu_hat) below_c += c;
  }
  const double mean_c = sum_c / nd;
  s.mu_hat = s.nu_hat + mean_c;
  s.tau_hat = abs_c / nd;
  s.gamma_hat = below_c / nd;
  s.d_hat = std::sqrt(std::numbers::pi / 2.0) * s.tau_hat;
  if (!(s.d_hat > 0.0)) throw DegenerateSampleError("symmetry_stats: all values are equal");

  double ss = 0.0;
  for (double v : sorted) {
    const double c = v - s.nu_hat - mean_c;
    ss += c * c;
  }
  s.sigma2_hat = ss / nd;
  s.T = mean_c / s.d_hat;

  s.bandwidth = resolve_bandwidth(sorted, kde);
  s.f_at_nu = gaussian_kde(sorted, s.nu_hat, s.bandwidth);
  if (!(s.f_at_nu >= kDensityFloor))
    throw IllConditionedError("symmetry_stats: density at the median below floor");

  const double f = s.f_at_nu;
  const double var = 2.0 / (std::numbers::pi * s.tau_hat * s.tau_hat) *
                     (s.sigma2_hat + 1.0 / (4.0 * f * f) - s.tau_hat / f);
  if (var < kVarianceFloor) {
    s.sigmaT2_hat = kVarianceFloor;
    s.variance_clamped = true;
  } else {
    s.sigmaT2_hat = var;
  }
  return s;
}

TrimDecision trim_decision(const SymmetryStats& stats, double z_crit, TestScaling scaling) {
  const double stat =
      scaling == TestScaling::root_n ? std::sqrt(static_cast<double>(stats.N)) * stats.T : stats.T;
  const double bound = z_crit * std::sqrt(stats.sigmaT2_hat);
  if (stat > bound) return TrimDecision::trim_max;
  if (stat < -bound) return TrimDecision::trim_min;
  return TrimDecision::stop;
}

}  // namespace mirrorfdr
