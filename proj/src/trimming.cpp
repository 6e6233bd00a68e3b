#include "mirrorfdr/trimming.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/parallel.hpp"

namespace mirrorfdr {

std::string Flags::describe() const {
  static constexpr std::pair<Flag, const char*> kNames[] = {
      {Flag::delta_expanded, "delta_expanded"}, {Flag::variance_clamped, "variance_clamped"},
      {Flag::floor_hit, "floor_hit"},           {Flag::degenerate, "degenerate"},
      {Flag::ill_conditioned, "ill_conditioned"}, {Flag::too_small, "too_small"},
      {Flag::empty_null, "empty_null"},
  };
  std::string out;
  for (const auto& [flag, name] : kNames) {
    if (!has(flag)) continue;
    if (!out.empty()) out += '|';
    out += name;
  }
  return out.empty() ? "none" : out;
}

void TrimConfig::validate() const {
  if (!(z_crit > 0.0)) throw ValidationError("trim: z_crit must be positive");
  if (batch_k < 1) throw ValidationError("trim: batch_k must be at least 1");
  if (min_retained < 10) throw ValidationError("trim: min_retained must be at least 10");
  if (!(query.delta > 0.0)) throw ValidationError("trim: delta must be positive");
  if (query.min_size < 20) throw ValidationError("trim: neighborhood min_size must be at least 20");
  if (kde.rule == KdeConfig::Bandwidth::fixed && !(kde.fixed_h > 0.0))
    throw ValidationError("trim: fixed KDE bandwidth must be positive");
  if (fixed_sigma_t && !(*fixed_sigma_t > 0.0))
    throw ValidationError("trim: fixed sigma_T must be positive");
}

namespace {

// Working multiset kept as a sorted window [lo, hi) over (value, position).
// Equal values stay adjacent, so moving a tie inside its group keeps order.
class TrimWindow {
 public:
  explicit TrimWindow(std::span<const double> values) : pos_(values.size()) {
    std::iota(pos_.begin(), pos_.end(), std::size_t{0});
    std::stable_sort(pos_.begin(), pos_.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    vals_.reserve(values.size());
    for (auto p : pos_) vals_.push_back(values[p]);
    hi_ = vals_.size();
  }

  std::size_t size() const { return hi_ - lo_; }
  std::span<const double> values() const { return {vals_.data() + lo_, size()}; }

  void drop_max() {
    const auto first = vals_.begin() + static_cast<std::ptrdiff_t>(lo_);
    const auto last = vals_.begin() + static_cast<std::ptrdiff_t>(hi_);
    const auto group = static_cast<std::size_t>(std::lower_bound(first, last, vals_[hi_ - 1]) -
                                                vals_.begin());
    const auto pick = lowest_position(group, hi_);
    std::rotate(pos_.begin() + static_cast<std::ptrdiff_t>(pick),
                pos_.begin() + static_cast<std::ptrdiff_t>(pick + 1),
                pos_.begin() + static_cast<std::ptrdiff_t>(hi_));
    --hi_;
  }

  void drop_min() {
    const auto first = vals_.begin() + static_cast<std::ptrdiff_t>(lo_);
    const auto last = vals_.begin() + static_cast<std::ptrdiff_t>(hi_);
    const auto group_end =
        static_cast<std::size_t>(std::upper_bound(first, last, vals_[lo_]) - vals_.begin());
    const auto pick = lowest_position(lo_, group_end);
    std::rotate(pos_.begin() + static_cast<std::ptrdiff_t>(lo_),
                pos_.begin() + static_cast<std::ptrdiff_t>(pick),
                pos_.begin() + static_cast<std::ptrdiff_t>(pick + 1));
    ++lo_;
  }

  std::vector<std::size_t> retained_positions() const {
    std::vector<std::size_t> out(pos_.begin() + static_cast<std::ptrdiff_t>(lo_),
                                 pos_.begin() + static_cast<std::ptrdiff_t>(hi_));
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t lowest_position(std::size_t begin, std::size_t end) const {
    std::size_t best = begin;
    for (std::size_t k = begin + 1; k < end; ++k) {
      if (pos_[k] < pos_[best]) best = k;
    }
    return best;
  }

  std::vector<std::size_t> pos_;
  std::vector<double> vals_;
  std::size_t lo_ = 0;
  std::size_t hi_ = 0;
};

double window_median(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

}  // namespace

TrimResult trim_sample(std::span<const double> values, const TrimConfig& cfg) {
  if (values.empty()) throw ValidationError("trim_sample: empty input");
  TrimWindow window(values);
  TrimResult result;

  while (true) {
    TrimDecision decision = TrimDecision::stop;
    try {
      auto stats = symmetry_stats_sorted(window.values(), cfg.kde);
      if (stats.variance_clamped) result.flags.set(Flag::variance_clamped);
      if (cfg.fixed_sigma_t) stats.sigmaT2_hat = *cfg.fixed_sigma_t * *cfg.fixed_sigma_t;
      decision = trim_decision(stats, cfg.z_crit, cfg.scaling);
    } catch (const DegenerateSampleError&) {
      result.flags.set(Flag::degenerate);
    } catch (const IllConditionedError&) {
      result.flags.set(Flag::ill_conditioned);
    }
    if (!result.first_decision) result.first_decision = decision;
    if (decision == TrimDecision::stop) break;

    const std::size_t room = window.size() > cfg.min_retained ? window.size() - cfg.min_retained : 0;
    const std::size_t k = std::min(cfg.batch_k, room);
    if (k == 0) {
      result.flags.set(Flag::floor_hit);
      break;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (decision == TrimDecision::trim_max) {
        window.drop_max();
      } else {
        window.drop_min();
      }
    }
    ++result.iterations;
  }

  const auto kept = window.values();
  result.m = window_median(kept);
  result.t0 = kept.back();
  result.retained = window.retained_positions();
  return result;
}

CenterResult estimate_center(const Dataset& ds, const NeighborhoodIndex& index, std::size_t i,
                             const TrimConfig& cfg) {
  const auto nb = index.query(i, cfg.query);
  if (nb.indices.size() < cfg.min_retained)
    throw ValidationError("estimate_center: neighborhood of row " + std::to_string(i) + " has " +
                          std::to_string(nb.indices.size()) + " members, fewer than min_retained " +
                          std::to_string(cfg.min_retained));
  std::vector<double> ys;
  ys.reserve(nb.indices.size());
  for (auto j : nb.indices) ys.push_back(ds.response(j));

  auto trimmed = trim_sample(ys, cfg);
  CenterResult out;
  out.m = trimmed.m;
  out.t0 = trimmed.t0;
  out.iterations = trimmed.iterations;
  out.effective_delta = nb.effective_delta;
  out.flags = trimmed.flags;
  if (nb.expanded) out.flags.set(Flag::delta_expanded);
  out.retained.reserve(trimmed.retained.size());
  for (auto p : trimmed.retained) out.retained.push_back(nb.indices[p]);
  return out;
}

CenterResult estimate_center(const Dataset& ds, std::size_t i, const TrimConfig& cfg) {
  NeighborhoodIndex index(ds);
  return estimate_center(ds, index, i, cfg);
}

CenterEstimates estimate_all_centers(const Dataset& ds, const TrimConfig& cfg, std::size_t threads,
                                     bool keep_retained) {
  const std::size_t n = ds.size();
  NeighborhoodIndex index(ds);
  CenterEstimates out;
  out.m.resize(n);
  out.t0.resize(n);
  out.retained.resize(n);
  out.iterations.resize(n);
  out.effective_delta.resize(n);
  out.flags.resize(n);

  parallel_for(n, threads, [&](std::size_t i) {
    CenterResult r;
    try {
      r = estimate_center(ds, index, i, cfg);
    } catch (const ValidationError&) {
      // Neighborhood below min_retained: no trimming, keep the raw bag.
      const auto nb = index.query(i, cfg.query);
      std::vector<double> ys;
      for (auto j : nb.indices) ys.push_back(ds.response(j));
      std::sort(ys.begin(), ys.end());
      r.m = window_median(ys);
      r.t0 = ys.back();
      r.retained = nb.indices;
      r.effective_delta = nb.effective_delta;
      r.flags.set(Flag::too_small);
      if (nb.expanded) r.flags.set(Flag::delta_expanded);
    }
    out.m[i] = r.m;
    out.t0[i] = r.t0;
    out.iterations[i] = r.iterations;
    out.effective_delta[i] = r.effective_delta;
    out.flags[i] = r.flags;
    if (keep_retained) out.retained[i] = std::move(r.retained);
  });
  return out;
}

}  // namespace mirrorfdr
