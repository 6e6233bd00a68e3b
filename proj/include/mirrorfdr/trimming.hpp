#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/symmetry.hpp"

namespace mirrorfdr {

/// Per-hypothesis diagnostics, combined as a bit set.
enum class Flag : std::uint32_t {
  none = 0,
  delta_expanded = 1u << 0,    // neighborhood needed a wider bandwidth
  variance_clamped = 1u << 1,  // sigma_T^2 hit the floor at least once
  floor_hit = 1u << 2,         // trimming stopped at min_retained
  degenerate = 1u << 3,        // retained values became constant
  ill_conditioned = 1u << 4,   // density at the median below floor
  too_small = 1u << 5,         // neighborhood smaller than min_retained
  empty_null = 1u << 6,        // no response at or below the centre
};

struct Flags {
  std::uint32_t bits = 0;

  void set(Flag f) { bits |= static_cast<std::uint32_t>(f); }
  bool has(Flag f) const { return (bits & static_cast<std::uint32_t>(f)) != 0; }
  Flags& operator|=(Flags other) {
    bits |= other.bits;
    return *this;
  }
  /// '|'-joined flag names, or "none".
  std::string describe() const;
};

struct TrimConfig {
  double z_crit = 1.96;
  std::size_t batch_k = 1;
  std::size_t min_retained = 30;
  KdeConfig kde;
  NeighborhoodQuery query;
  TestScaling scaling = TestScaling::root_n;
  /// Replaces the estimated sigma_T in every decision. Test fixtures only.
  std::optional<double> fixed_sigma_t;

  void validate() const;
};

/// Trimming applied to one bag of responses.
struct TrimResult {
  double m = 0.0;   // median of retained values
  double t0 = 0.0;  // max of retained values
  std::vector<std::size_t> retained;  // positions into the input, ascending
  std::size_t iterations = 0;
  std::optional<TrimDecision> first_decision;
  Flags flags;
};

/// Repeatedly tests symmetry of the retained values and drops the batch_k
/// largest (or smallest) until the test passes or min_retained is reached.
/// Ties are removed lowest position first. A test that cannot be computed
/// (constant values, vanishing density) stops the loop and sets a flag.
TrimResult trim_sample(std::span<const double> values, const TrimConfig& cfg);

struct CenterResult {
  double m = 0.0;
  double t0 = 0.0;
  std::vector<std::size_t> retained;  // dataset row indices, ascending
  std::size_t iterations = 0;
  double effective_delta = 0.0;
  Flags flags;
};

/// Trimming of the neighborhood of row i. Throws ValidationError if the
/// neighborhood (after expansion) is smaller than min_retained.
CenterResult estimate_center(const Dataset& ds, std::size_t i, const TrimConfig& cfg);
CenterResult estimate_center(const Dataset& ds, const NeighborhoodIndex& index, std::size_t i,
                             const TrimConfig& cfg);

struct CenterEstimates {
  std::vector<double> m;
  std::vector<double> t0;
  std::vector<std::vector<std::size_t>> retained;
  std::vector<std::size_t> iterations;
  std::vector<double> effective_delta;
  std::vector<Flags> flags;

  std::size_t size() const { return m.size(); }
};

/// estimate_center for every row, in parallel over `threads` workers (0 =
/// hardware concurrency). Rows whose estimate fails fall back to the median
/// and max of the untrimmed neighborhood with a flag. Output does not depend
/// on the worker count.
CenterEstimates estimate_all_centers(const Dataset& ds, const TrimConfig& cfg,
                                     std::size_t threads = 1, bool keep_retained = true);

}  // namespace mirrorfdr
