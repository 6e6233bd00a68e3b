#include "mirrorfdr/mirror_pvalues.hpp"

#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/parallel.hpp"

namespace mirrorfdr {

MirrorNull mirror_null(std::span<const double> responses, double center) {
  MirrorNull null;
  null.center = center;
  for (double y : responses) {
    if (y <= center) {
      null.below.push_back(y);
      null.mirrored.push_back(2.0 * center - y);
    }
  }
  if (null.below.empty())
    throw ValidationError("mirror_null: no response at or below the centre");
  null.combined = null.below;
  null.combined.insert(null.combined.end(), null.mirrored.begin(), null.mirrored.end());
  return null;
}

double empirical_pvalue(double y, const MirrorNull& null) {
  if (null.combined.empty()) throw ValidationError("empirical_pvalue: empty null");
  std::size_t above = 0;
  for (double v : null.combined) {
    if (v > y) ++above;
  }
  return static_cast<double>(above) / static_cast<double>(null.combined.size());
}

MirrorCount mirror_count(std::span<const double> responses, double center, double y) {
  MirrorCount c;
  for (double v : responses) {
    if (!(v <= center)) continue;
    c.total += 2;
    if (v > y) ++c.above;
    if (2.0 * center - v > y) ++c.above;
  }
  return c;
}

PValueVector all_pvalues(const Dataset& ds, const CenterEstimates& centers,
                         const NeighborhoodQuery& q, NullSource source, std::size_t threads) {
  return pvalues_at(ds, centers, q, ds.responses(), source, threads);
}

PValueVector pvalues_at(const Dataset& ds, const CenterEstimates& centers,
                        const NeighborhoodQuery& q, std::span<const double> at, NullSource source,
                        std::size_t threads) {
  const std::size_t n = ds.size();
  if (centers.size() != n) throw ValidationError("all_pvalues: centers do not match dataset");
  if (at.size() != n) throw ValidationError("all_pvalues: evaluation points do not match dataset");
  NeighborhoodIndex index(ds);
  PValueVector out;
  out.p.assign(n, 1.0);
  out.source_size.assign(n, 0);
  out.flags.assign(n, Flags{});

  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<std::size_t> members;
    if (source == NullSource::retained) {
      if (centers.retained[i].empty())
        throw ValidationError("all_pvalues: retained sets were not kept");
      members = centers.retained[i];
    } else {
      // Re-run the query at the bandwidth the centre was estimated with.
      NeighborhoodQuery local = q;
      local.delta = centers.effective_delta[i] > 0.0 ? centers.effective_delta[i] : q.delta;
      local.min_size = 0;
      members = index.query(i, local).indices;
    }
    std::vector<double> ys;
    ys.reserve(members.size());
    for (auto j : members) ys.push_back(ds.response(j));
    const auto c = mirror_count(ys, centers.m[i], at[i]);
    out.source_size[i] = c.total;
    if (c.total == 0) {
      out.flags[i].set(Flag::empty_null);
      return;
    }
    out.p[i] = static_cast<double>(c.above) / static_cast<double>(c.total);
  });
  return out;
}

}  // namespace mirrorfdr
