#include "mirrorfdr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "mirrorfdr/distributions.hpp"
#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/parallel.hpp"

namespace mirrorfdr {

double TruncatedNormalSpec::variance(double x) const {
  const double v = var_fn(x);
  return second_is_sd ? v * v : v;
}

double BetaLaw::sample(Rng& rng) const {
  const double u = rng.uniform();
  return is_uniform() ? u : beta_quantile(u, a, b);
}

ScenarioSpec ScenarioSpec::scenario(int id) {
  using std::numbers::pi;
  ScenarioSpec s;
  s.id = id;
  switch (id) {
    case 1:
      // Only the alternative depends on x.
      s.null_phi = {[](double) { return 10.0; }, [](double) { return 10.0; }};
      s.alt_phi = {[](double x) { return 5.0 * std::exp(x); },
                   [](double x) { return 10.0 - std::sin(pi * x); }};
      break;
    case 2:
    case 3: {
      TruncatedNormalSpec phi{[](double x) { return 10.0 * std::exp(x); },
                              [](double x) { return 5.0 + std::sin(pi * x); }};
      s.null_phi = phi;
      s.alt_phi = phi;
      if (id == 3) {
        s.alt_cov = {2.0, 2.0};
        s.null_q = {3.0, 3.0};
      }
      break;
    }
    case 4: {
      TruncatedNormalSpec phi{[](double x) { return std::sin(4.0 * x) + std::sin(8.0 * x); },
                              [](double) { return 5.0; }};
      s.null_phi = phi;
      s.alt_phi = phi;
      s.alt_cov = {0.5, 0.5};
      break;
    }
    default:
      throw ValidationError("simulation: unknown scenario id " + std::to_string(id) +
                            " (expected 1-4)");
  }
  return s;
}

void ScenarioSpec::validate() const {
  if (n_null + n_alt < 2) throw ValidationError("simulation: need at least 2 hypotheses");
  if (!null_phi.mean_fn || !null_phi.var_fn || !alt_phi.mean_fn || !alt_phi.var_fn)
    throw ValidationError("simulation: scenario has no response law");
  if (!(null_phi.zcut > 0.0) || !(alt_phi.zcut > 0.0))
    throw ValidationError("simulation: zcut must be positive");
}

Dataset generate(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::size_t n = spec.n_null + spec.n_alt;
  std::vector<Hypothesis> rows;
  rows.reserve(n);
  auto draw = [&](const BetaLaw& cov, const BetaLaw& qlaw, const TruncatedNormalSpec& phi,
                  Label label) {
    const double x = cov.sample(rng);
    const double q = qlaw.sample(rng);
    const double y = truncnorm_quantile(q, phi.mean(x), phi.variance(x), phi.zcut);
    rows.push_back({{x}, y, label});
  };
  for (std::size_t i = 0; i < spec.n_null; ++i)
    draw(spec.null_cov, spec.null_q, spec.null_phi, Label::null);
  for (std::size_t i = 0; i < spec.n_alt; ++i)
    draw(spec.alt_cov, spec.alt_q, spec.alt_phi, Label::alternative);
  // Fisher-Yates so row order carries no label information.
  for (std::size_t i = n; i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(rows[i], rows[j]);
  }
  return Dataset::from_records(rows);
}

std::vector<std::size_t> bh_procedure(std::span<const double> p, double alpha) {
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::size_t k = 0;
  for (std::size_t rank = n; rank >= 1; --rank) {
    if (p[order[rank - 1]] <= static_cast<double>(rank) * alpha / static_cast<double>(n)) {
      k = rank;
      break;
    }
  }
  std::vector<std::size_t> rejected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(rejected.begin(), rejected.end());
  return rejected;
}

std::string to_string(Method m) { return m == Method::proposed ? "proposed" : "bh"; }

Method parse_method(const std::string& text) {
  if (text == "proposed") return Method::proposed;
  if (text == "bh") return Method::bh;
  throw ValidationError("simulation: unknown method '" + text + "' (expected proposed or bh)");
}

RunScore score(const Dataset& labelled, std::span<const std::size_t> rejected) {
  if (!labelled.has_labels()) throw ValidationError("score: dataset has no labels");
  RunScore s;
  s.R = rejected.size();
  std::size_t true_rejections = 0;
  for (auto i : rejected) {
    if (labelled.label(i) == Label::null) {
      ++s.V;
    } else {
      ++true_rejections;
    }
  }
  std::size_t n_alt = 0;
  for (auto l : labelled.labels()) n_alt += l == Label::alternative ? 1 : 0;
  s.FDP = static_cast<double>(s.V) / static_cast<double>(std::max<std::size_t>(s.R, 1));
  s.TPR = n_alt == 0 ? 0.0 : static_cast<double>(true_rejections) / static_cast<double>(n_alt);
  return s;
}

namespace {

// Welford accumulation; sample standard deviation, 0 for a single value.
struct Running {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

}  // namespace

ReplicationTable replicate(const ScenarioSpec& spec, std::size_t reps,
                           std::span<const double> alphas, std::span<const Method> methods,
                           std::uint64_t seed, const PipelineConfig& cfg, std::size_t threads) {
  if (reps < 1) throw ValidationError("replicate: reps must be at least 1");
  if (alphas.empty() || methods.empty())
    throw ValidationError("replicate: need at least one alpha and one method");
  spec.validate();
  cfg.trim.validate();

  const bool want_net = std::find(methods.begin(), methods.end(), Method::proposed) != methods.end();
  std::vector<std::optional<std::vector<RunScore>>> per_rep(reps);
  std::vector<std::string> errors(reps);

  parallel_for(reps, threads, [&](std::size_t rep) {
    try {
      const std::uint64_t data_seed = derive_seed(seed, rep);
      const auto ds = generate(spec, data_seed);
      PipelineConfig local = cfg;
      local.threads = 1;
      local.keep_retained = false;
      local.train.seed = derive_seed(data_seed, 1);
      const auto est = run_estimation(ds, local);
      std::optional<ThresholdNet> start;
      if (want_net) start = pretrained_net(est, local);

      std::vector<RunScore> row_scores;
      for (double alpha : alphas) {
        for (auto method : methods) {
          if (method == Method::bh) {
            row_scores.push_back(score(ds, bh_procedure(est.pvalues.p, alpha)));
          } else {
            PipelineConfig at = local;
            at.train.alpha = alpha;
            const auto fit = fit_threshold(est, *start, at);
            row_scores.push_back(score(ds, fit.result.rejected));
          }
        }
      }
      per_rep[rep] = std::move(row_scores);
    } catch (const Error& e) {
      errors[rep] = "replicate " + std::to_string(rep) + ": " + e.what();
    }
  });

  ReplicationTable table;
  const std::size_t cols = alphas.size() * methods.size();
  std::vector<Running> R(cols), F(cols), T(cols);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    if (!per_rep[rep]) {
      table.failures.push_back(errors[rep]);
      continue;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& s = (*per_rep[rep])[c];
      R[c].add(static_cast<double>(s.R));
      F[c].add(s.FDP);
      T[c].add(s.TPR);
    }
    table.scores.push_back(std::move(*per_rep[rep]));
  }
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const std::size_t c = a * methods.size() + m;
      table.rows.push_back({methods[m], alphas[a], R[c].mean, R[c].sd(), F[c].mean, F[c].sd(),
                            T[c].mean, T[c].sd(), R[c].n});
    }
  }
  return table;
}

}  // namespace mirrorfdr
