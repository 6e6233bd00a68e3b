#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/pipeline.hpp"
#include "mirrorfdr/random.hpp"

namespace mirrorfdr {

/// N(mean(x), var(x)) truncated to mean +- zcut sd. With `second_is_sd` the
/// second function is read as a standard deviation instead of a variance.
struct TruncatedNormalSpec {
  std::function<double(double)> mean_fn;
  std::function<double(double)> var_fn;
  double zcut = 2.5;
  bool second_is_sd = false;

  double mean(double x) const { return mean_fn(x); }
  double variance(double x) const;
};

/// Uniform(0,1) when a == b == 1, Beta(a, b) otherwise; sampled by inversion.
struct BetaLaw {
  double a = 1.0;
  double b = 1.0;

  double sample(Rng& rng) const;
  bool is_uniform() const { return a == 1.0 && b == 1.0; }
};

struct ScenarioSpec {
  int id = 1;
  std::size_t n_null = 4000;
  std::size_t n_alt = 1000;
  BetaLaw null_cov;
  BetaLaw alt_cov;
  BetaLaw null_q{2.0, 2.0};
  BetaLaw alt_q{10.0, 0.5};
  TruncatedNormalSpec null_phi;
  TruncatedNormalSpec alt_phi;

  /// The four built-in scenarios; throws ValidationError for other ids.
  static ScenarioSpec scenario(int id);
  void validate() const;
};

/// Labelled dataset: nulls then alternatives drawn from `spec`, rows shuffled.
/// Bit-identical for a given seed.
Dataset generate(const ScenarioSpec& spec, std::uint64_t seed);

/// Benjamini-Hochberg step-up at level alpha; ascending rejected indices.
std::vector<std::size_t> bh_procedure(std::span<const double> p, double alpha);

enum class Method { proposed, bh };
std::string to_string(Method m);
Method parse_method(const std::string& text);

/// Truth-based outcome of one rejection set.
struct RunScore {
  std::size_t R = 0;
  std::size_t V = 0;
  double FDP = 0.0;  // V / max(R, 1)
  double TPR = 0.0;  // true rejections / alternatives
};
RunScore score(const Dataset& labelled, std::span<const std::size_t> rejected);

struct Metrics {
  Method method = Method::proposed;
  double alpha = 0.0;
  double R_mean = 0.0;
  double R_std = 0.0;
  double FDR_mean = 0.0;  // mean FDP across replications
  double FDR_std = 0.0;
  double TPR_mean = 0.0;
  double TPR_std = 0.0;
  std::size_t reps = 0;
};

struct ReplicationTable {
  std::vector<Metrics> rows;  // alpha-major, then method, in request order
  std::vector<std::string> failures;
  /// scores[rep][row] for every successful replicate.
  std::vector<std::vector<RunScore>> scores;
};

/// Runs `reps` fresh replicates (seeds derived from `seed`) through every
/// (alpha, method) pair. Replicates run in parallel; aggregation follows
/// replicate order so the table does not depend on the worker count.
ReplicationTable replicate(const ScenarioSpec& spec, std::size_t reps,
                           std::span<const double> alphas, std::span<const Method> methods,
                           std::uint64_t seed, const PipelineConfig& cfg, std::size_t threads = 1);

}  // namespace mirrorfdr
