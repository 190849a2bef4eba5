#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "isa/dataset.hpp"
#include "isa/gmm.hpp"
#include "isa/matrix.hpp"

namespace isa {

struct ScoreOptions {
  // Divide p by its sum before computing entropy terms. Off by default: p is
  // exp of the min-max normalised log-likelihood and lies in [1, e].
  bool simplex = false;
  unsigned threads = 1;
};

/// Per-point scores: raw log-likelihood l, min-max normalised l', p = exp(l')
/// (or p / sum p with `simplex`) and entropy term -p log p.
struct ScoreVector {
  std::vector<double> raw_ll;
  std::vector<double> norm_ll;
  std::vector<double> p;
  std::vector<double> contrib;
  bool simplex = false;
  bool degenerate = false;  // all raw_ll equal; norm_ll was set to zero

  std::size_t size() const noexcept { return raw_ll.size(); }
};

enum class DeltaMode { naive, analytic };

struct DeltaOptions {
  DeltaMode mode = DeltaMode::analytic;
  // Recompute min-max normalisation (and the simplex sum) over the remaining
  // points for each held-out point instead of holding p fixed.
  bool renormalize = false;
};

struct EntropyReport {
  double total_entropy = 0.0;
  std::vector<double> deltas;  // H(X) - H(X without point i)
  DeltaMode mode = DeltaMode::analytic;
};

/// Builds the score chain from precomputed log-likelihoods. Throws on empty
/// or non-finite input.
ScoreVector scores_from_log_likelihoods(std::vector<double> raw_ll, const ScoreOptions& options = {});

ScoreVector score_points(const GmmModel& model, const Matrix& embeddings, const ScoreOptions& options = {});

/// Sum of the entropy terms, accumulated in index order with Neumaier
/// compensation.
double dataset_entropy(const ScoreVector& scores);

EntropyReport entropy_deltas(const ScoreVector& scores, const DeltaOptions& options = {});

/// Top-k points by delta, descending, ties broken by ascending index.
Selection select_isa(const EntropyReport& report, std::size_t k);
Selection select_isa(const ScoreVector& scores, std::size_t k);

}  // namespace isa
