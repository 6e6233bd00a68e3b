#pragma once

#include <cstddef>
#include <span>

namespace mirrorfdr {

struct KdeConfig {
  enum class Bandwidth { silverman, fixed };
  Bandwidth rule = Bandwidth::silverman;
  double fixed_h = 1.0;  // used when rule == fixed
};

/// Mean-median symmetry statistic T = (mean - median) / d and the plug-in
/// estimate of the asymptotic variance of sqrt(N) T.
struct SymmetryStats {
  double mu_hat = 0.0;      // sample mean
  double nu_hat = 0.0;      // sample median
  double d_hat = 0.0;       // sqrt(pi/2) * mean |y - median|
  double sigma2_hat = 0.0;  // sample variance, 1/N normalisation
  double gamma_hat = 0.0;   // mean of (y - median) 1{y < median}
  double tau_hat = 0.0;     // mean of (y - median) - 2 gamma_hat = mean |y - median|
  double bandwidth = 0.0;
  double f_at_nu = 0.0;     // KDE at the median
  double sigmaT2_hat = 0.0;
  double T = 0.0;
  std::size_t N = 0;
  bool variance_clamped = false;
};

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kDensityFloor = 1e-12;

/// Midpoint of the two central order statistics for even N.
double sample_median(std::span<const double> values);

/// Linear-interpolation quantile of an ascending sample (Hyndman-Fan type 7).
double sorted_quantile(std::span<const double> sorted, double prob);

/// 0.9 * min(sd, IQR/1.34) * N^(-1/5); falls back to whichever spread is
/// nonzero. Throws IllConditionedError if both are zero.
double silverman_bandwidth(std::span<const double> sorted);

double resolve_bandwidth(std::span<const double> sorted, const KdeConfig& kde);

/// Gaussian kernel density estimate (1/N) sum K_h(point - Y_j).
double kde_at(std::span<const double> values, double point, const KdeConfig& kde);

SymmetryStats symmetry_stats(std::span<const double> values, const KdeConfig& kde = {});

/// Same as symmetry_stats but requires `sorted` ascending; O(N), no copy.
SymmetryStats symmetry_stats_sorted(std::span<const double> sorted, const KdeConfig& kde = {});

enum class TrimDecision { stop, trim_max, trim_min };

/// root_n compares sqrt(N)|T| with z * sigma_T. literal compares |T| with
/// z * sigma_T, which never trims in practice since |T| <= sqrt(2/pi).
enum class TestScaling { root_n, literal };

TrimDecision trim_decision(const SymmetryStats& stats, double z_crit = 1.96,
                           TestScaling scaling = TestScaling::root_n);

}  // namespace mirrorfdr
