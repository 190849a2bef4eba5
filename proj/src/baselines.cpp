#include "isa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "isa/error.hpp"
#include "isa/parallel.hpp"
#include "isa/rng.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "baselines";
constexpr std::size_t kBandwidthSample = 1024;

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - b[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Selection select_random(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (n < 1) invalid("random sampling needs n >= 1");
  if (k < 1) invalid("k must be >= 1");
  Rng rng(seed);
  Selection sel;
  sel.strategy = Strategy::random;
  sel.k = k;
  sel.seed = seed;
  sel.indices = sample_indices(n, std::min(k, n), rng);
  sel.scores.assign(sel.indices.size(), 1.0);
  return sel;
}

double median_pairwise_distance(const Matrix& x, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  if (x.rows() <= kBandwidthSample) {
    pool.resize(x.rows());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    Rng rng(seed);
    pool = sample_indices(x.rows(), kBandwidthSample, rng);
  }
  std::vector<double> dist;
  dist.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t a = 0; a < pool.size(); ++a)
    for (std::size_t b = a + 1; b < pool.size(); ++b)
      dist.push_back(std::sqrt(squared_distance(x.row(pool[a]), x.row(pool[b]))));
  if (dist.empty()) return 0.0;
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  const double upper = dist[mid];
  if (dist.size() % 2 == 1) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

DensityScores density_scores(const Matrix& x, const DensityConfig& config) {
  const std::size_t n = x.rows();
  if (n < 1) invalid("density scores need N >= 1");

  DensityScores out;
  if (config.bandwidth) {
    if (!(*config.bandwidth > 0.0) || !std::isfinite(*config.bandwidth))
      invalid(fmt::format("bandwidth must be a positive finite number, got {}", *config.bandwidth));
    out.bandwidth = *config.bandwidth;
  } else if (n == 1) {
    // No pairs to take a median over; the single kernel term is 1 for any h.
    out.bandwidth = 1.0;
  } else {
    out.bandwidth = median_pairwise_distance(x, config.seed);
    if (!(out.bandwidth > 0.0)) invalid("degenerate bandwidth: median pairwise distance is 0");
  }

  const double scale = -1.0 / (2.0 * out.bandwidth * out.bandwidth);
  out.density.resize(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    double sum = 0.0;
    const auto xi = x.row(i);
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(scale * squared_distance(xi, x.row(j)));
    out.density[i] = sum / static_cast<double>(n);
  });

  out.sample_weight.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.sample_weight[i] = 1.0 / out.density[i];
    total += out.sample_weight[i];
  }
  for (auto& w : out.sample_weight) w /= total;
  return out;
}

Selection select_density(const DensityScores& scores, std::size_t k, std::uint64_t seed, bool top_k) {
  if (k < 1) invalid("k must be >= 1");
  const std::size_t n = scores.sample_weight.size();
  const std::size_t m = std::min(k, n);
  const auto& w = scores.sample_weight;

  Selection sel;
  sel.strategy = Strategy::density;
  sel.k = k;
  sel.seed = seed;

  if (top_k) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    order.resize(m);
    sel.indices = std::move(order);
  } else {
    Rng rng(seed);
    std::vector<bool> taken(n, false);
    sel.indices.reserve(m);
    for (std::size_t draw = 0; draw < m; ++draw) {
      double remaining = 0.0;
      std::size_t last = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) {
          remaining += w[i];
          last = i;
        }
      const double u = rng.uniform() * remaining;
      // Rounding can leave u at or above the final running sum; the last
      // remaining index absorbs it.
      std::size_t pick = last;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        running += w[i];
        if (u < running) {
          pick = i;
          break;
        }
      }
      taken[pick] = true;
      sel.indices.push_back(pick);
    }
  }
  sel.scores.reserve(sel.indices.size());
  for (std::size_t i : sel.indices) sel.scores.push_back(w[i]);
  return sel;
}

}  // namespace isa
