#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/trimming.hpp"

namespace mirrorfdr {

/// Responses at or below the centre together with their reflections about it.
/// `combined` is symmetric about `center` as a multiset.
struct MirrorNull {
  double center = 0.0;
  std::vector<double> below;
  std::vector<double> mirrored;
  std::vector<double> combined;
};

/// Throws ValidationError when no response is <= center.
MirrorNull mirror_null(std::span<const double> responses, double center);

/// Fraction of the combined null strictly greater than y.
double empirical_pvalue(double y, const MirrorNull& null);

/// Which neighborhood supplies the reference values.
enum class NullSource { neighborhood, retained };

struct PValueVector {
  std::vector<double> p;
  std::vector<std::size_t> source_size;  // |combined| per hypothesis
  std::vector<Flags> flags;

  std::size_t size() const { return p.size(); }
};

/// p_i from the mirror null of row i. With NullSource::neighborhood the
/// untrimmed neighborhood at the same effective bandwidth is used; with
/// NullSource::retained the trimmed set stored in `centers`. Rows with an
/// empty null get p = 1 and Flag::empty_null.
PValueVector all_pvalues(const Dataset& ds, const CenterEstimates& centers,
                         const NeighborhoodQuery& q, NullSource source = NullSource::neighborhood,
                         std::size_t threads = 1);

/// Mirror p-value of an arbitrary per-row value `at[i]` against the null of
/// row i; all_pvalues is this with at = responses.
PValueVector pvalues_at(const Dataset& ds, const CenterEstimates& centers,
                        const NeighborhoodQuery& q, std::span<const double> at,
                        NullSource source = NullSource::neighborhood, std::size_t threads = 1);

/// Same count as empirical_pvalue(y, mirror_null(responses, center)) without
/// materialising the null. Returns {count above y, |combined|}.
struct MirrorCount {
  std::size_t above = 0;
  std::size_t total = 0;
};
MirrorCount mirror_count(std::span<const double> responses, double center, double y);

}  // namespace mirrorfdr
