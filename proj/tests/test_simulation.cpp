#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mirrorfdr/distributions.hpp"
#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/random.hpp"
#include "mirrorfdr/simulation.hpp"
#include "mirrorfdr/symmetry.hpp"
#include "oracles.hpp"

using namespace mirrorfdr;

TEST_CASE("normal quantile and cdf") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-9})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("beta quantile matches numerical integration") {
  const std::pair<double, double> laws[] = {{2, 2}, {3, 3}, {10, 0.5}, {0.5, 0.5}};
  for (auto [a, b] : laws) {
    for (double prob : {0.001, 0.05, 0.3, 0.5, 0.8, 0.99}) {
      const double got = beta_quantile(prob, a, b);
      const double want = oracle::beta_quantile(prob, a, b);
      CHECK_MESSAGE(std::abs(got - want) < 1e-9, "Beta(" << a << "," << b << ") at " << prob);
    }
  }
  // Beta(2,2) has the closed-form cdf 3x^2 - 2x^3.
  const double x = beta_quantile(0.3, 2, 2);
  CHECK(3 * x * x - 2 * x * x * x == doctest::Approx(0.3).epsilon(1e-13));
}

TEST_CASE("truncated normal quantile") {
  CHECK(truncnorm_quantile(0.5, 7.25, 3.0, 2.5) == 7.25);
  CHECK(truncnorm_quantile(1 - 1e-15, 0.0, 4.0, 2.5) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(truncnorm_quantile(1e-15, 1.0, 1.0, 2.5) == doctest::Approx(-1.5).epsilon(1e-9));
  for (double q : {0.01, 0.2, 0.8413447460685429, 0.95, 0.999}) {
    for (double zcut : {1.0, 2.5}) {
      const double got = truncnorm_quantile(q, 3.0, 2.0, zcut);
      const double want = oracle::truncnorm_quantile(q, 3.0, 2.0, zcut);
      CHECK_MESSAGE(std::abs(got - want) < 1e-9, "q=" << q << " zcut=" << zcut);
    }
  }
  CHECK_THROWS_AS(truncnorm_quantile(0.0, 0, 1, 2.5), ValidationError);
  CHECK_THROWS_AS(truncnorm_quantile(1.0, 0, 1, 2.5), ValidationError);
  CHECK_THROWS_AS(truncnorm_quantile(0.5, 0, 0, 2.5), ValidationError);
  CHECK_THROWS_AS(truncnorm_quantile(0.5, 0, 1, 0), ValidationError);
}

TEST_CASE("property: truncated normal quantile is monotone and symmetric") {
  double prev = -1e300;
  for (int k = 1; k < 1000; ++k) {
    const double q = k / 1000.0;
    const double y = truncnorm_quantile(q, 2.0, 5.0, 2.5);
    CHECK(y > prev);
    prev = y;
    CHECK(truncnorm_quantile(1 - q, 2.0, 5.0, 2.5) - 2.0 ==
          doctest::Approx(2.0 - y).epsilon(1e-10));
  }
}

TEST_CASE("scenario laws") {
  const auto s1 = ScenarioSpec::scenario(1);
  CHECK(s1.n_null == 4000);
  CHECK(s1.n_alt == 1000);
  CHECK(s1.null_phi.mean(0.3) == 10.0);
  CHECK(s1.null_phi.variance(0.9) == 10.0);
  CHECK(s1.alt_phi.mean(1.0) == doctest::Approx(5 * std::numbers::e));
  CHECK(s1.alt_phi.variance(0.5) == doctest::Approx(9.0));
  CHECK(s1.null_q.a == 2.0);
  CHECK(s1.alt_q.a == 10.0);
  CHECK(s1.alt_q.b == 0.5);
  CHECK(s1.alt_cov.is_uniform());

  const auto s2 = ScenarioSpec::scenario(2);
  CHECK(s2.null_phi.mean(1.0) == doctest::Approx(10 * std::numbers::e));
  CHECK(s2.null_phi.variance(0.5) == doctest::Approx(6.0));
  CHECK(s2.alt_phi.mean(0.2) == s2.null_phi.mean(0.2));

  const auto s3 = ScenarioSpec::scenario(3);
  CHECK(s3.alt_cov.a == 2.0);
  CHECK(s3.alt_cov.b == 2.0);
  CHECK(s3.null_q.a == 3.0);
  CHECK(s3.null_cov.is_uniform());

  const auto s4 = ScenarioSpec::scenario(4);
  CHECK(s4.null_phi.mean(0.0) == 0.0);
  CHECK(s4.null_phi.variance(0.3) == 5.0);
  CHECK(s4.alt_cov.a == 0.5);
  CHECK(s4.alt_cov.b == 0.5);

  auto sd = s4;
  sd.null_phi.second_is_sd = true;
  CHECK(sd.null_phi.variance(0.3) == 25.0);

  CHECK_THROWS_AS(ScenarioSpec::scenario(9), ValidationError);
  CHECK_THROWS_AS(ScenarioSpec::scenario(0), ValidationError);
}

TEST_CASE("generate is reproducible, labelled and shuffled") {
  auto spec = ScenarioSpec::scenario(3);
  spec.n_null = 400;
  spec.n_alt = 100;
  const auto a = generate(spec, 42);
  const auto b = generate(spec, 42);
  const auto c = generate(spec, 43);
  CHECK(std::equal(a.responses().begin(), a.responses().end(), b.responses().begin()));
  CHECK(std::equal(a.covariates().begin(), a.covariates().end(), b.covariates().begin()));
  CHECK(!std::equal(a.responses().begin(), a.responses().end(), c.responses().begin()));
  REQUIRE(a.has_labels());
  const auto alts = std::count(a.labels().begin(), a.labels().end(), Label::alternative);
  CHECK(alts == 100);
  // Alternatives are not all at the end.
  const auto tail = std::count(a.labels().end() - 100, a.labels().end(), Label::alternative);
  CHECK(tail < 60);
  for (double x : a.covariates()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("generated stream is pinned") {
  // Guards the documented generator: mt19937_64, 53-bit open-interval
  // uniforms and inversion sampling.
  Rng a(5489);
  std::mt19937_64 ref(5489);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == ref());
  Rng u(1);
  std::mt19937_64 ru(1);
  for (int i = 0; i < 10; ++i) CHECK(u.uniform() == ((ru() >> 11) + 0.5) / 9007199254740992.0);
}

TEST_CASE("scenario 1 nulls average 10 under symmetric truncation") {
  auto spec = ScenarioSpec::scenario(1);
  spec.n_null = 100000;
  spec.n_alt = 1;
  const auto ds = generate(spec, 3);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.label(i) == Label::null) {
      sum += ds.response(i);
      ++n;
    }
  CHECK(std::abs(sum / n - 10.0) < 0.05);
}

TEST_CASE("property: null laws are symmetric at fixed x") {
  for (int id = 1; id <= 4; ++id) {
    const auto spec = ScenarioSpec::scenario(id);
    Rng rng(1000 + id);
    int rejected = 0;
    const int reps = 500;
    for (int r = 0; r < reps; ++r) {
      const double x = 0.37;
      std::vector<double> ys(1000);
      for (auto& y : ys)
        y = truncnorm_quantile(spec.null_q.sample(rng), spec.null_phi.mean(x),
                               spec.null_phi.variance(x), spec.null_phi.zcut);
      rejected += trim_decision(symmetry_stats(ys)) != TrimDecision::stop;
    }
    const double rate = rejected / double(reps);
    MESSAGE("scenario " << id << " null rejection rate " << rate);
    CHECK(rate >= 0.02);
    CHECK(rate <= 0.09);
  }
}

TEST_CASE("scenario 1 alternatives cross the null mean at x = ln 2") {
  const auto spec = ScenarioSpec::scenario(1);
  CHECK(spec.alt_phi.mean(1.0) == doctest::Approx(5 * std::exp(1.0)).epsilon(1e-14));
  CHECK(spec.alt_phi.mean(std::log(2.0)) == doctest::Approx(spec.null_phi.mean(std::log(2.0))));
  CHECK(spec.alt_phi.mean(0.2) < spec.null_phi.mean(0.2));
}

TEST_CASE("property: alternatives sit above the null median at the same x in scenarios 2-4") {
  for (int id = 2; id <= 4; ++id) {
    const auto spec = ScenarioSpec::scenario(id);
    Rng rng(77 + id);
    int above = 0;
    const int draws = 20000;
    for (int k = 0; k < draws; ++k) {
      const double x = spec.alt_cov.sample(rng);
      const double y = truncnorm_quantile(spec.alt_q.sample(rng), spec.alt_phi.mean(x),
                                          spec.alt_phi.variance(x), spec.alt_phi.zcut);
      above += y > spec.null_phi.mean(x);
    }
    const double frac = above / double(draws);
    MESSAGE("scenario " << id << ": P(alt y > null median) = " << frac);
    CHECK(frac >= 0.95);
  }
}

TEST_CASE("Benjamini-Hochberg hand cases") {
  CHECK(bh_procedure(std::vector<double>{0.01, 0.02, 0.04, 0.9}, 0.05) ==
        std::vector<std::size_t>{0, 1});
  CHECK(bh_procedure(std::vector<double>(5, 1.0), 0.1).empty());
  CHECK(bh_procedure(std::vector<double>(5, 0.0), 0.1).size() == 5);
  CHECK(bh_procedure(std::vector<double>{}, 0.1).empty());
  // Step-up: the largest passing rank wins even when a smaller rank fails.
  CHECK(bh_procedure(std::vector<double>{0.04, 0.03, 0.5, 0.049}, 0.05).size() == 0);
  CHECK(bh_procedure(std::vector<double>{0.02, 0.03, 0.039, 0.04}, 0.04) ==
        std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("property: BH matches the counting oracle on random inputs") {
  Rng rng(4);
  for (int rep = 0; rep < 2000; ++rep) {
    std::vector<double> p(1 + rep % 30);
    for (auto& v : p) v = rng.uniform() < 0.3 ? rng.uniform(0, 0.01) : rng.uniform();
    const double alpha = rng.uniform(0.01, 0.3);
    CHECK(bh_procedure(p, alpha) == oracle::bh(p, alpha));
  }
}

TEST_CASE("property: BH on uniform null p-values keeps FDR within alpha + 0.02") {
  Rng rng(2);
  const double alpha = 0.1;
  double fdp_sum = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> p(200);
    for (auto& v : p) v = rng.uniform();
    fdp_sum += bh_procedure(p, alpha).empty() ? 0.0 : 1.0;
  }
  MESSAGE("empirical FDR " << fdp_sum / reps);
  CHECK(fdp_sum / reps <= alpha + 0.02);
}

TEST_CASE("score counts truth") {
  std::vector<Hypothesis> rows{{{0.1}, 1, Label::null},
                               {{0.2}, 2, Label::alternative},
                               {{0.3}, 3, Label::alternative},
                               {{0.4}, 4, Label::null}};
  const auto ds = Dataset::from_records(rows);
  const auto s = score(ds, std::vector<std::size_t>{0, 1});
  CHECK(s.R == 2);
  CHECK(s.V == 1);
  CHECK(s.FDP == 0.5);
  CHECK(s.TPR == 0.5);
  const auto none = score(ds, std::vector<std::size_t>{});
  CHECK(none.FDP == 0.0);
  CHECK_THROWS_AS(score(Dataset(1, {0.0}, {1.0}), std::vector<std::size_t>{}), ValidationError);
}

TEST_CASE("methods parse and print") {
  CHECK(parse_method("bh") == Method::bh);
  CHECK(parse_method("proposed") == Method::proposed);
  CHECK(to_string(Method::bh) == "bh");
  CHECK_THROWS_AS(parse_method("ihw"), ValidationError);
}

TEST_CASE("replicate builds one row per alpha and method, independent of workers") {
  auto spec = ScenarioSpec::scenario(1);
  spec.n_null = 400;
  spec.n_alt = 100;
  PipelineConfig cfg;
  cfg.train.epochs = 40;
  cfg.train.pretrain_epochs = 20;
  const std::vector<double> alphas{0.1, 0.2};
  const std::vector<Method> methods{Method::proposed, Method::bh};
  const auto one = replicate(spec, 3, alphas, methods, 9, cfg, 1);
  const auto two = replicate(spec, 3, alphas, methods, 9, cfg, 2);
  REQUIRE(one.rows.size() == 4);
  CHECK(one.rows[0].alpha == 0.1);
  CHECK(one.rows[0].method == Method::proposed);
  CHECK(one.rows[1].method == Method::bh);
  CHECK(one.rows[2].alpha == 0.2);
  CHECK(one.failures.empty());
  CHECK(one.scores.size() == 3);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(one.rows[k].reps == 3);
    CHECK(one.rows[k].R_mean == two.rows[k].R_mean);
    CHECK(one.rows[k].FDR_std == two.rows[k].FDR_std);
    CHECK(one.rows[k].TPR_mean == two.rows[k].TPR_mean);
    CHECK(one.rows[k].FDR_mean >= 0.0);
    CHECK(one.rows[k].FDR_mean <= 1.0);
    CHECK(one.rows[k].TPR_mean >= 0.0);
    CHECK(one.rows[k].TPR_mean <= 1.0);
    double mean = 0;
    for (const auto& rep : one.scores) mean += double(rep[k].R) / 3.0;
    CHECK(one.rows[k].R_mean == doctest::Approx(mean));
  }

  const auto single = replicate(spec, 1, std::vector<double>{0.1}, std::vector<Method>{Method::bh}, 9, cfg);
  CHECK(single.rows[0].R_std == 0.0);
  CHECK(single.rows[0].FDR_std == 0.0);
  CHECK(single.rows[0].TPR_std == 0.0);
  CHECK_THROWS_AS(replicate(spec, 0, alphas, methods, 9, cfg), ValidationError);
}
