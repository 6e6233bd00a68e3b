#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/random.hpp"

using namespace mirrorfdr;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const auto dir = fs::temp_directory_path() / "mirrorfdr_test_dataset";
  fs::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

Dataset line_1d(const std::vector<double>& xs) {
  std::vector<double> ys(xs.size(), 0.0);
  return Dataset(1, xs, ys);
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs(n * d);
  std::vector<double> ys(n);
  for (auto& v : xs) v = rng.uniform(-3.0, 7.0);
  for (auto& v : ys) v = rng.uniform(0.5, 20.0);
  return Dataset(d, xs, ys);
}

}  // namespace

TEST_CASE("load_csv reads a one-covariate file in row order") {
  const auto path = write_temp("three.csv", "age,sbp\n20,120\n40,130.5\n60,141\n");
  const auto ds = load_csv(path, {{"age"}, "sbp", std::nullopt});
  CHECK(ds.size() == 3);
  CHECK(ds.dim() == 1);
  CHECK(ds.covariate(1)[0] == 40.0);
  CHECK(ds.response(1) == 130.5);
  CHECK(!ds.is_scaled());
  CHECK(!ds.has_labels());
  CHECK(ds.covariate_names == std::vector<std::string>{"age"});
  CHECK(ds.response_name == "sbp");
}

TEST_CASE("load_csv reads two covariates") {
  const auto path = write_temp("geo.csv", "lon,lat,pm25\n1,2,3\n4,5,6\n");
  const auto ds = load_csv(path, {{"lon", "lat"}, "pm25", std::nullopt});
  CHECK(ds.dim() == 2);
  CHECK(ds.size() == 2);
  CHECK(ds.covariate(1)[1] == 5.0);
}

TEST_CASE("load_csv names the row and column of an unparseable cell") {
  std::string text = "x,y\n";
  for (int r = 0; r < 10; ++r) text += std::to_string(r) + "," + (r == 7 ? "abc" : "1.5") + "\n";
  const auto path = write_temp("bad.csv", text);
  const auto msg = error_of([&] { load_csv(path, {{"x"}, "y", std::nullopt}); });
  CHECK(msg.find("row 7") != std::string::npos);
  CHECK(msg.find("'y'") != std::string::npos);
}

TEST_CASE("load_csv rejects missing columns, empty files and non-finite cells") {
  const auto path = write_temp("ok.csv", "x,y\n1,2\n");
  CHECK(error_of([&] { load_csv(path, {{"z"}, "y", std::nullopt}); }).find("'z'") !=
        std::string::npos);
  CHECK(!error_of([&] { load_csv(write_temp("empty.csv", ""), {{"x"}, "y", std::nullopt}); }).empty());
  CHECK(!error_of([&] { load_csv(write_temp("nan.csv", "x,y\n1,nan\n"), {{"x"}, "y", std::nullopt}); })
             .empty());
  CHECK(!error_of([&] { load_csv(write_temp("inf.csv", "x,y\n1,inf\n"), {{"x"}, "y", std::nullopt}); })
             .empty());
  CHECK(!error_of([&] { load_csv("/nonexistent/file.csv", {{"x"}, "y", std::nullopt}); }).empty());
}

TEST_CASE("load_csv parses labels, quoted headers and a byte-order mark") {
  const auto path = write_temp("lab.csv", "\xEF\xBB\xBF\"x\",y,label\n0.5,1,0\n0.7,2,1\n");
  const auto ds = load_csv(path, {{"x"}, "y", std::string("label")});
  REQUIRE(ds.has_labels());
  CHECK(ds.label(0) == Label::null);
  CHECK(ds.label(1) == Label::alternative);
  const auto bad = write_temp("badlab.csv", "x,y,label\n0.5,1,2\n");
  CHECK(error_of([&] { load_csv(bad, {{"x"}, "y", std::string("label")}); }).find("label") !=
        std::string::npos);
}

TEST_CASE("transform_response log and log_shift") {
  const Dataset ds(1, {0.0, 1.0}, {std::numbers::e, 1.0});
  const auto logged = transform_response(ds, ResponseTransform::parse("log"));
  CHECK(logged.response(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(logged.response(1) == 0.0);
  CHECK(logged.covariate(0)[0] == 0.0);
  CHECK(logged.transform().kind == ResponseTransform::Kind::log);

  const auto shifted = transform_response(Dataset(1, {0.0}, {0.0}), ResponseTransform::parse("log_shift:1"));
  CHECK(shifted.response(0) == 0.0);
  CHECK(transform_response(ds, ResponseTransform::parse("identity")).response(0) == std::numbers::e);
}

TEST_CASE("transform_response reports the offending row") {
  const Dataset ds(1, {0.0, 1.0, 2.0}, {1.0, 2.0, 0.0});
  const auto msg = error_of([&] { transform_response(ds, ResponseTransform::parse("log")); });
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK_THROWS_AS(transform_response(ds, ResponseTransform::parse("log_shift:-3")), ValidationError);
  CHECK_THROWS_AS(ResponseTransform::parse("sqrt"), ValidationError);
  CHECK_THROWS_AS(ResponseTransform::parse("log_shift:x"), ValidationError);
}

TEST_CASE("property: log transform preserves the order of responses") {
  Rng rng(11);
  std::vector<double> ys(200);
  for (auto& v : ys) v = rng.uniform(1e-6, 1e6);
  const Dataset ds(1, std::vector<double>(ys.size(), 0.0), ys);
  const auto t = transform_response(ds, ResponseTransform::parse("log"));
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      if (ys[i] < ys[j]) CHECK(t.response(i) < t.response(j));
}

TEST_CASE("scale_covariates maps each axis onto the unit interval") {
  const auto scaled = scale_covariates(line_1d({20.0, 40.0, 60.0}));
  CHECK(scaled.covariate(0)[0] == 0.0);
  CHECK(scaled.covariate(1)[0] == 0.5);
  CHECK(scaled.covariate(2)[0] == 1.0);
  CHECK(scaled.is_scaled());
  CHECK(scaled.scaler()[0].invert(0.5) == 40.0);

  const auto unit = scale_covariates(line_1d({0.0, 1.0}));
  CHECK(unit.covariate(0)[0] == 0.0);
  CHECK(unit.covariate(1)[0] == 1.0);
}

TEST_CASE("scale_covariates flags constant axes and maps them to 0.5") {
  const Dataset ds(2, {3.0, 1.0, 3.0, 2.0, 3.0, 5.0}, {0.0, 0.0, 0.0});
  const auto scaled = scale_covariates(ds);
  CHECK(scaled.scaler()[0].constant);
  CHECK(!scaled.scaler()[1].constant);
  for (std::size_t i = 0; i < 3; ++i) CHECK(scaled.covariate(i)[0] == 0.5);
  CHECK(scaled.covariate(2)[1] == 1.0);
  CHECK_THROWS_AS(scale_covariates(line_1d({1.0})), ValidationError);
}

TEST_CASE("property: scaling is idempotent and lands in the unit cube") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = random_dataset(50, 1 + seed % 3, seed);
    const auto once = scale_covariates(ds);
    const auto twice = scale_covariates(once);
    for (std::size_t k = 0; k < once.covariates().size(); ++k) {
      CHECK(once.covariates()[k] == twice.covariates()[k]);
      CHECK(once.covariates()[k] >= 0.0);
      CHECK(once.covariates()[k] <= 1.0);
    }
  }
}

TEST_CASE("neighborhood uses a strict bandwidth and always contains the row") {
  const auto ds = line_1d({0.0, 0.1, 0.5});
  const auto nb = neighborhood(ds, 0, {0.2, Norm::euclidean, 1});
  CHECK(nb.indices == std::vector<std::size_t>{0, 1});
  CHECK(!nb.expanded);
  CHECK(nb.effective_delta == 0.2);

  const auto all = neighborhood(ds, 1, {5.0, Norm::euclidean, 1});
  CHECK(all.indices == std::vector<std::size_t>{0, 1, 2});

  const auto tie = line_1d({0.0, 0.25, 1.0});
  CHECK(neighborhood(tie, 0, {0.25, Norm::euclidean, 0}).indices == std::vector<std::size_t>{0});
}

TEST_CASE("neighborhood in two dimensions under both norms") {
  const Dataset ds(2, {0.0, 0.0, 0.1, 0.1, 0.12, 0.0}, {0.0, 0.0, 0.0});
  CHECK(covariate_distance(ds.covariate(0), ds.covariate(1), Norm::euclidean) ==
        doctest::Approx(std::sqrt(0.02)));
  CHECK(neighborhood(ds, 0, {0.15, Norm::euclidean, 0}).indices == std::vector<std::size_t>{0, 1, 2});
  CHECK(neighborhood(ds, 0, {0.11, Norm::euclidean, 0}).indices == std::vector<std::size_t>{0});
  CHECK(neighborhood(ds, 0, {0.11, Norm::max, 0}).indices == std::vector<std::size_t>{0, 1});
}

TEST_CASE("neighborhood widens delta geometrically until min_size is met") {
  std::vector<double> xs;
  for (int k = 0; k < 100; ++k) xs.push_back(k / 99.0);
  const auto ds = line_1d(xs);
  const auto nb = neighborhood(ds, 0, {0.01, Norm::euclidean, 20});
  CHECK(nb.expanded);
  CHECK(nb.indices.size() >= 20);
  double delta = 0.01;
  while (delta * 99.0 <= 19.0) delta *= 1.5;
  CHECK(nb.effective_delta == doctest::Approx(delta));
  // Asking for more rows than exist stops at the whole dataset.
  CHECK(neighborhood(ds, 0, {0.01, Norm::euclidean, 1000}).indices.size() == 100);
}

TEST_CASE("property: neighborhoods are symmetric without expansion") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = scale_covariates(random_dataset(120, 1 + seed % 2, seed + 100));
    for (auto norm : {Norm::euclidean, Norm::max}) {
      const NeighborhoodQuery q{0.15, norm, 0};
      std::vector<std::vector<std::size_t>> nb(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) nb[i] = neighborhood(ds, i, q).indices;
      for (std::size_t i = 0; i < ds.size(); ++i)
        for (auto j : nb[i]) CHECK(std::binary_search(nb[j].begin(), nb[j].end(), i));
    }
  }
}

TEST_CASE("property: the sorted index answers exactly like the linear scan") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto ds = scale_covariates(random_dataset(300, 1 + seed % 3, seed + 200));
    const NeighborhoodIndex index(ds);
    for (auto norm : {Norm::euclidean, Norm::max}) {
      for (std::size_t min_size : {std::size_t{0}, std::size_t{50}}) {
        const NeighborhoodQuery q{0.03, norm, min_size};
        for (std::size_t i = 0; i < ds.size(); i += 7) {
          const auto a = neighborhood(ds, i, q);
          const auto b = index.query(i, q);
          CHECK(a.indices == b.indices);
          CHECK(a.effective_delta == b.effective_delta);
        }
      }
    }
  }
}
