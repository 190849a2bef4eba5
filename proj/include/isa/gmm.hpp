#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isa/matrix.hpp"

namespace isa {

/// Two-component Gaussian mixture with diagonal covariances.
///
/// Density: mix * N(x | mean1, diag(var1)) + (1 - mix) * N(x | mean2, diag(var2)).
/// Diagonal covariance is a deliberate restriction: embedding dimensions run
/// to several thousand, where a full covariance is both too large to store
/// and rank-deficient for corpora of ~1e5 rows.
struct GmmModel {
  double mix = 0.5;
  std::vector<double> mean1, mean2;
  std::vector<double> var1, var2;

  std::size_t dim() const noexcept { return mean1.size(); }

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

struct EmConfig {
  int max_iters = 200;
  double rel_tol = 1e-6;
  std::uint64_t seed = 42;  // only used to subsample rows for seeding when N > 1024
  double variance_floor = 1e-6;
  unsigned threads = 1;
};

struct GmmFit {
  GmmModel model;
  // Total log-likelihood before the first M-step and after each one.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
};

/// Throws isa::Error if the model is malformed (dimension mismatch, mix
/// outside (0,1), non-positive or non-finite parameters).
void validate(const GmmModel& model);

/// EM fit. Means are seeded at the farthest pair of rows among at most 1024
/// (seeded) rows, variances at the global per-dimension variance, mix at 0.5.
GmmFit fit_gmm(const Matrix& embeddings, const EmConfig& config);

double log_likelihood(const GmmModel& model, std::span<const double> point);
double log_likelihood(const GmmModel& model, std::span<const float> point);

/// Per-row log-likelihoods; rows are evaluated independently.
std::vector<double> log_likelihoods(const GmmModel& model, const Matrix& embeddings, unsigned threads = 1);

/// Posterior component probabilities (gamma1, gamma2); they sum to one.
std::pair<double, double> responsibilities(const GmmModel& model, std::span<const double> point);
std::pair<double, double> responsibilities(const GmmModel& model, std::span<const float> point);

std::string to_json(const GmmModel& model);
GmmModel gmm_from_json(std::string_view text);
void write_model(const GmmModel& model, const std::filesystem::path& path);
GmmModel read_model(const std::filesystem::path& path);

}  // namespace isa
