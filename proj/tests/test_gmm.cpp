#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "isa/error.hpp"
#include "isa/gmm.hpp"
#include "support.hpp"

using namespace isa;

namespace {

GmmModel standard_1d() { return GmmModel{0.5, {0.0}, {0.0}, {1.0}, {1.0}}; }

std::vector<double> as_double(std::span<const float> row) { return {row.begin(), row.end()}; }

}  // namespace

TEST_CASE("log_likelihood closed forms for a collapsed standard normal") {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(log_likelihood(standard_1d(), std::vector<double>{0.0}) == doctest::Approx(-half_log_2pi).epsilon(1e-15));
  CHECK(log_likelihood(standard_1d(), std::vector<double>{0.0}) == doctest::Approx(-0.9189385).epsilon(1e-7));
  CHECK(log_likelihood(standard_1d(), std::vector<double>{3.0}) == doctest::Approx(-5.4189385).epsilon(1e-7));
}

TEST_CASE("log_likelihood matches the 50-digit oracle on random models, d <= 8") {
  Rng rng(2024);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    const auto model = testing::random_model(d, rng);
    std::vector<double> x(d);
    for (auto& v : x) v = 6.0 * rng.uniform() - 3.0;
    const double got = log_likelihood(model, x);
    const double want = testing::oracle_log_likelihood(model, x);
    REQUIRE(std::abs(got - want) <= 1e-10);
  }
}

TEST_CASE("log_likelihood survives high dimension without underflow") {
  const std::size_t d = 4096;
  GmmModel m{0.3, std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), std::vector<double>(d, 1e-3),
             std::vector<double>(d, 1e-3)};
  std::vector<double> far(d, 5.0);
  const double ll = log_likelihood(m, far);
  CHECK(std::isfinite(ll));
  // Dominated by component 2: log(0.7) - 0.5 d log(2 pi 1e-3) - 0.5 * d * 16 / 1e-3.
  const double expected = std::log(0.7) - 0.5 * d * std::log(2 * std::numbers::pi * 1e-3) - 0.5 * d * 16.0 / 1e-3;
  CHECK(ll == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("responsibilities") {
  GmmModel sym{0.5, {-1.0}, {1.0}, {1.0}, {1.0}};
  const auto [g1, g2] = responsibilities(sym, std::vector<double>{0.0});
  CHECK(g1 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g2 == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<double> deep{-6.0};
  const auto [f1, f2] = responsibilities(sym, deep);
  const auto [o1, o2] = testing::oracle_responsibilities(sym, deep);
  CHECK(f1 > 0.999);
  CHECK(f1 == doctest::Approx(o1).epsilon(1e-12));
  CHECK(f2 == doctest::Approx(o2).epsilon(1e-10));

  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    const auto model = testing::random_model(d, rng);
    std::vector<double> x(d);
    for (auto& v : x) v = 10.0 * rng.uniform() - 5.0;
    const auto [a, b] = responsibilities(model, x);
    REQUIRE(std::abs(a + b - 1.0) <= 1e-12);
    REQUIRE(a >= 0.0);
    REQUIRE(b >= 0.0);
    REQUIRE(a <= 1.0);
    REQUIRE(b <= 1.0);
  }
}

TEST_CASE("dimension mismatch is an error") {
  CHECK_THROWS_AS(log_likelihood(standard_1d(), std::vector<double>{1.0, 2.0}), Error);
  CHECK_THROWS_AS(responsibilities(standard_1d(), std::vector<double>{}), Error);
}

TEST_CASE("two well-separated 1-d clusters are recovered") {
  const auto x = testing::two_blobs(100, 1, 10.0, 0.1, 77);
  const auto fit = fit_gmm(x, EmConfig{}).model;
  const double lo = std::min(fit.mean1[0], fit.mean2[0]);
  const double hi = std::max(fit.mean1[0], fit.mean2[0]);
  CHECK(std::abs(lo + 10.0) < 0.5);
  CHECK(std::abs(hi - 10.0) < 0.5);
  CHECK(std::abs(fit.mix - 0.5) < 0.1);
}

TEST_CASE("two points collapse onto the variance floor") {
  Matrix x(2, 1, {0.0f, 1.0f});
  EmConfig cfg;
  const auto fit = fit_gmm(x, cfg);
  CHECK(fit.converged);
  CHECK(fit.model.var1[0] == cfg.variance_floor);
  CHECK(fit.model.var2[0] == cfg.variance_floor);
  CHECK(fit.model.mean1[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fit.model.mean2[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit preconditions") {
  auto message = [](const Matrix& x) {
    try {
      fit_gmm(x, EmConfig{});
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  Matrix nan_row(3, 2, {0, 0, 1, std::numeric_limits<float>::quiet_NaN(), 2, 2});
  CHECK(message(nan_row) == "gmm: non-finite input at row 1");
  CHECK(message(Matrix(1, 2, {1, 2})).find("at least 2 rows") != std::string::npos);
  CHECK(message(Matrix(3, 2, {1, 2, 1, 2, 1, 2})).find("zero-variance corpus") != std::string::npos);

  EmConfig bad;
  bad.max_iters = 0;
  CHECK_THROWS_AS(fit_gmm(Matrix(2, 1, {0, 1}), bad), Error);
  bad = EmConfig{};
  bad.rel_tol = 0.0;
  CHECK_THROWS_AS(fit_gmm(Matrix(2, 1, {0, 1}), bad), Error);
}

TEST_CASE("property: EM log-likelihood never decreases") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    const std::size_t d = 1 + rng.below(6);
    const auto x = testing::two_blobs(n, d, 3.0 * rng.uniform(), 0.2 + rng.uniform(), rng.next());
    EmConfig cfg;
    cfg.rel_tol = 1e-12;
    const auto fit = fit_gmm(x, cfg);
    for (std::size_t t = 1; t < fit.log_likelihood_trace.size(); ++t)
      REQUIRE(fit.log_likelihood_trace[t] >= fit.log_likelihood_trace[t - 1] - 1e-9);
    validate(fit.model);
  }
}

TEST_CASE("fit is deterministic and independent of thread count") {
  const auto x = testing::two_blobs(1500, 5, 1.5, 1.0, 4);  // > 1024 rows: seeded seeding sample
  EmConfig one;
  EmConfig many = one;
  many.threads = 4;
  const auto a = fit_gmm(x, one);
  const auto b = fit_gmm(x, one);
  const auto c = fit_gmm(x, many);
  CHECK(a.model == b.model);
  CHECK(a.model == c.model);
  CHECK(a.log_likelihood_trace == c.log_likelihood_trace);
}

TEST_CASE("property: permuting rows leaves the fit unchanged up to relabelling") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20 + rng.below(400);
    const std::size_t d = 1 + rng.below(4);
    const auto x = testing::two_blobs(n, d, 2.0, 0.7, rng.next());
    const auto perm = sample_indices(n, n, rng);
    Matrix y(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) y(i, j) = x(perm[i], j);
    const auto a = fit_gmm(x, EmConfig{}).model;
    auto b = fit_gmm(y, EmConfig{}).model;
    if (std::abs(a.mix - b.mix) > std::abs(a.mix - (1.0 - b.mix))) {
      std::swap(b.mean1, b.mean2);
      std::swap(b.var1, b.var2);
      b.mix = 1.0 - b.mix;
    }
    CHECK(a.mix == doctest::Approx(b.mix).epsilon(1e-8));
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(a.mean1[j] == doctest::Approx(b.mean1[j]).epsilon(1e-7));
      CHECK(a.mean2[j] == doctest::Approx(b.mean2[j]).epsilon(1e-7));
      CHECK(a.var1[j] == doctest::Approx(b.var1[j]).epsilon(1e-7));
      CHECK(a.var2[j] == doctest::Approx(b.var2[j]).epsilon(1e-7));
    }
  }
}

TEST_CASE("batch log-likelihoods agree with the point form") {
  const auto x = testing::two_blobs(64, 3, 1.0, 1.0, 8);
  const auto model = fit_gmm(x, EmConfig{}).model;
  const auto batch = log_likelihoods(model, x, 3);
  for (std::size_t i = 0; i < x.rows(); ++i) CHECK(batch[i] == log_likelihood(model, as_double(x.row(i))));
}

TEST_CASE("model JSON round-trips and is validated") {
  testing::TempDir tmp;
  GmmModel m{0.25, {1.5, -2.0}, {0.1, 0.2}, {1.0, 1e-6}, {3.0, 4.0}};
  write_model(m, tmp / "m.json");
  CHECK(read_model(tmp / "m.json") == m);
  CHECK_THROWS_AS(gmm_from_json(R"({"mix":1.0,"mean1":[0],"mean2":[0],"var1":[1],"var2":[1]})"), Error);
  CHECK_THROWS_AS(gmm_from_json(R"({"mix":0.5,"mean1":[0],"mean2":[0,1],"var1":[1],"var2":[1]})"), Error);
  CHECK_THROWS_AS(gmm_from_json(R"({"mix":0.5,"mean1":[0],"mean2":[0],"var1":[0],"var2":[1]})"), Error);
  CHECK_THROWS_AS(gmm_from_json(R"({"mix":0.5})"), Error);
}
