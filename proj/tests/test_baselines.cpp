#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "criteria.hpp"
#include "isa/baselines.hpp"
#include "isa/error.hpp"
#include "support.hpp"

using namespace isa;

namespace {

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("select_random basics") {
  const auto all = select_random(5, 5, 17);
  CHECK(sorted(all.indices) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(all.strategy == Strategy::random);
  CHECK(all.seed == 17u);
  CHECK(all.scores == std::vector<double>(5, 1.0));
  CHECK(select_random(5, 50, 1).indices.size() == 5);
  CHECK_THROWS_WITH_AS(select_random(5, 0, 1), "baselines: k must be >= 1", Error);
  CHECK_THROWS_AS(select_random(0, 1, 1), Error);
  CHECK(select_random(1000, 100, 3) == select_random(1000, 100, 3));
  CHECK(select_random(1000, 100, 3).indices != select_random(1000, 100, 4).indices);
}

TEST_CASE("property: random selections are distinct and in range") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const std::size_t k = 1 + rng.below(600);
    const auto sel = select_random(n, k, rng.next());
    REQUIRE(sel.indices.size() == std::min(n, k));
    REQUIRE(std::set<std::size_t>(sel.indices.begin(), sel.indices.end()).size() == sel.indices.size());
    REQUIRE(*std::max_element(sel.indices.begin(), sel.indices.end()) < n);
    validate(sel, n);
  }
}

TEST_CASE("random sampler inclusion frequencies are uniform over 1000 seeds") {
  const auto r = testing::random_uniformity(10000, 1000, 1000);
  INFO("outside 3 sd: " << r.outside << ", allowed " << r.allowed);
  CHECK(r.pass);
}

TEST_CASE("density of a single point") {
  const auto s = density_scores(Matrix(1, 3, {1, 2, 3}));
  CHECK(s.density == std::vector<double>{1.0});
  CHECK(s.sample_weight == std::vector<double>{1.0});
  CHECK(s.bandwidth == 1.0);
}

TEST_CASE("density on [0, 0.1, 10] with h = 1") {
  DensityConfig cfg;
  cfg.bandwidth = 1.0;
  const auto s = density_scores(Matrix(3, 1, {0.0f, 0.1f, 10.0f}), cfg);
  CHECK(s.density[2] < s.density[0]);
  CHECK(s.density[2] < s.density[1]);
  CHECK(s.sample_weight[2] > s.sample_weight[0]);
  CHECK(s.sample_weight[2] > s.sample_weight[1]);
  const double gap = static_cast<double>(0.1f);
  const double near = std::exp(-gap * gap / 2.0);
  CHECK(s.density[0] == doctest::Approx((1.0 + near + std::exp(-50.0)) / 3.0).epsilon(1e-12));
}

TEST_CASE("property: density invariants and oracle agreement") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(trial < 2 ? 2000 : 300);
    const std::size_t d = 1 + rng.below(8);
    const auto x = testing::two_blobs(n, d, 2.0 * rng.uniform(), 0.5 + rng.uniform(), rng.next());
    DensityConfig cfg;
    cfg.threads = 1 + static_cast<unsigned>(rng.below(4));
    if (trial % 2 == 0) cfg.bandwidth = 0.1 + 3.0 * rng.uniform();
    const auto s = density_scores(x, cfg);
    const auto want = testing::oracle_density(x, s.bandwidth);
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(std::abs(s.density[i] - want[i]) <= 1e-9);
      REQUIRE(s.density[i] > 0.0);
    }
    CHECK(std::abs(std::accumulate(s.sample_weight.begin(), s.sample_weight.end(), 0.0) - 1.0) <= 1e-9);
    for (std::size_t i = 0; i + 1 < n; ++i)
      if (s.density[i] < s.density[i + 1]) REQUIRE(s.sample_weight[i] > s.sample_weight[i + 1]);

    DensityConfig wider = cfg;
    wider.bandwidth = 2.0 * s.bandwidth;
    const auto w = density_scores(x, wider);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(w.density[i] >= s.density[i]);

    DensityConfig serial = cfg;
    serial.threads = 1;
    CHECK(density_scores(x, serial).density == s.density);
  }
}

TEST_CASE("median pairwise distance") {
  // Pairwise distances {1, 2, 3}; median 2.
  CHECK(median_pairwise_distance(Matrix(3, 1, {0, 1, 3}), 0) == 2.0);
  // Four points on a line: {1, 2, 3, 1, 2, 1}; even count averages 1 and 2.
  CHECK(median_pairwise_distance(Matrix(4, 1, {0, 1, 2, 3}), 0) == 1.5);
}

TEST_CASE("bandwidth errors") {
  CHECK_THROWS_WITH_AS(density_scores(Matrix(3, 2, {1, 1, 1, 1, 1, 1})),
                       "baselines: degenerate bandwidth: median pairwise distance is 0", Error);
  for (double bad : {0.0, -1.0, std::nan("")}) {
    DensityConfig cfg;
    cfg.bandwidth = bad;
    CHECK_THROWS_AS(density_scores(Matrix(2, 1, {0, 1}), cfg), Error);
  }
  DensityConfig fixed;
  fixed.bandwidth = 1.0;
  CHECK(density_scores(Matrix(2, 1, {1, 1}), fixed).density == std::vector<double>{1.0, 1.0});
}

TEST_CASE("select_density") {
  const auto x = testing::two_blobs(200, 3, 1.0, 1.0, 3);
  const auto s = density_scores(x);
  const auto a = select_density(s, 50, 9);
  CHECK(a == select_density(s, 50, 9));
  CHECK(a.strategy == Strategy::density);
  CHECK(a.seed == 9u);
  CHECK(std::set<std::size_t>(a.indices.begin(), a.indices.end()).size() == 50);
  for (std::size_t j = 0; j < a.indices.size(); ++j) CHECK(a.scores[j] == s.sample_weight[a.indices[j]]);
  CHECK(sorted(select_density(s, 200, 1).indices).size() == 200);
  CHECK(sorted(select_density(s, 500, 1).indices) == sorted(select_random(200, 200, 0).indices));
  CHECK_THROWS_AS(select_density(s, 0, 1), Error);

  const auto top = select_density(s, 5, 1, true);
  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto i, auto j) { return s.sample_weight[i] > s.sample_weight[j]; });
  CHECK(top.indices == std::vector<std::size_t>(order.begin(), order.begin() + 5));
}

TEST_CASE("sequential draw follows the documented rule") {
  // With weights [0.5, 0.25, 0.25] the first draw maps u in [0, 0.5) to 0.
  DensityScores s;
  s.density = {1, 2, 2};
  s.bandwidth = 1;
  s.sample_weight = {0.5, 0.25, 0.25};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const double u = rng.uniform();
    const auto first = select_density(s, 1, seed).indices.at(0);
    CHECK(first == (u < 0.5 ? 0u : u < 0.75 ? 1u : 2u));
  }
}

TEST_CASE("outlier draw frequency follows its weight") {
  // With the self-term in every density the outlier's weight cannot exceed
  // one half, so it is the most frequent pick but not a majority.
  const auto r = testing::outlier_inclusion(1000);
  INFO("rate = " << r.rate << ", weight = " << r.weight);
  CHECK(r.weight < 0.5);
  CHECK(std::abs(r.rate - r.weight) < 3.5 * std::sqrt(r.weight * (1 - r.weight) / 1000));
  CHECK(r.rate > 10 * r.runner_up_rate);
}

TEST_CASE("uniform weights reproduce select_random's inclusion law") {
  const double tv = testing::uniform_density_vs_random_tv(6, 4, 1000);
  INFO("tv = " << tv);
  CHECK(tv < 0.02);
}
