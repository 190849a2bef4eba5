#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "isa/dataset.hpp"
#include "isa/matrix.hpp"

namespace isa {

/// Uniform sample of min(k, n) distinct indices: the first min(k, n) entries
/// of a seeded partial Fisher-Yates shuffle (see Rng).
Selection select_random(std::size_t n, std::size_t k, std::uint64_t seed);

struct DensityScores {
  std::vector<double> density;        // mean Gaussian kernel value, self-term included
  double bandwidth = 0.0;
  std::vector<double> sample_weight;  // proportional to 1 / density, sums to 1
};

struct DensityConfig {
  std::optional<double> bandwidth;  // nullopt = median heuristic
  std::uint64_t seed = 42;          // subsample seed for the median heuristic
  unsigned threads = 1;
};

/// Exact kernel sums: density[i] = (1/N) sum_j exp(-|x_i - x_j|^2 / (2 h^2)).
/// The automatic bandwidth is the median pairwise Euclidean distance over a
/// seeded subsample of min(N, 1024) rows.
DensityScores density_scores(const Matrix& embeddings, const DensityConfig& config = {});

double median_pairwise_distance(const Matrix& embeddings, std::uint64_t seed);

/// Weighted sampling without replacement by sequential draw-and-remove. Each
/// draw takes u = uniform() * (sum of remaining weights, summed in index
/// order) and picks the first remaining index whose running weight sum
/// exceeds u. With `top_k`, returns the k largest weights instead (stable).
Selection select_density(const DensityScores& scores, std::size_t k, std::uint64_t seed, bool top_k = false);

}  // namespace isa
