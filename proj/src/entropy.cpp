#include "isa/entropy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "isa/error.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "isa";

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }

class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double entropy_term(double p) { return -p * std::log(p); }

/// Entropy of the points in `members` after min-max normalising over exactly
/// those points. Used by the literal renormalised loop.
double renormalized_entropy(const std::vector<double>& raw_ll, const std::vector<std::size_t>& members,
                            bool simplex) {
  if (members.empty()) return 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i : members) {
    lo = std::min(lo, raw_ll[i]);
    hi = std::max(hi, raw_ll[i]);
  }
  const double range = hi - lo;
  std::vector<double> p;
  p.reserve(members.size());
  for (std::size_t i : members) p.push_back(range > 0.0 ? std::exp((raw_ll[i] - lo) / range) : 1.0);
  double norm = 1.0;
  if (simplex) {
    NeumaierSum s;
    for (double v : p) s.add(v);
    norm = s.value();
  }
  NeumaierSum h;
  for (double v : p) h.add(entropy_term(v / norm));
  return h.value();
}

// Held-out entropy with renormalisation, O(N). Removing a point changes the
// min-max range only if that point is the unique minimum or unique maximum
// (a "range setter"), so at most three distinct ranges occur. For each range
// we accumulate A = -sum p log p and S = sum p over the non-setter points, then
// adjust for the held-out point and the remaining setters. Under simplex,
// q = p / S gives H' = A/S + log S.
std::vector<double> renormalized_deltas_fast(const std::vector<double>& raw_ll, bool simplex, double total) {
  const std::size_t n = raw_ll.size();
  std::vector<double> deltas(n);
  if (n == 1) {
    deltas[0] = total;
    return deltas;
  }
  const auto [min_it, max_it] = std::minmax_element(raw_ll.begin(), raw_ll.end());
  const double lo = *min_it, hi = *max_it;
  const bool unique_lo = std::count(raw_ll.begin(), raw_ll.end(), lo) == 1;
  const bool unique_hi = std::count(raw_ll.begin(), raw_ll.end(), hi) == 1;
  std::vector<std::size_t> setters;
  if (unique_lo) setters.push_back(static_cast<std::size_t>(min_it - raw_ll.begin()));
  if (unique_hi) setters.push_back(static_cast<std::size_t>(max_it - raw_ll.begin()));
  auto is_setter = [&](std::size_t i) { return std::find(setters.begin(), setters.end(), i) != setters.end(); };

  double lo2 = std::numeric_limits<double>::infinity();
  double hi2 = -std::numeric_limits<double>::infinity();
  for (double v : raw_ll) {
    if (v != lo) lo2 = std::min(lo2, v);
    if (v != hi) hi2 = std::max(hi2, v);
  }
  auto range_without = [&](std::size_t i) -> std::pair<double, double> {
    double l = lo, h = hi;
    if (unique_lo && raw_ll[i] == lo) l = lo2;
    if (unique_hi && raw_ll[i] == hi) h = hi2;
    return {l, h};
  };
  auto p_of = [](double v, double l, double h) { return h > l ? std::exp((v - l) / (h - l)) : 1.0; };

  struct Group {
    double lo, hi;
    double a = 0.0, s = 0.0;
  };
  std::vector<Group> groups;
  auto group_for = [&](double l, double h) -> const Group& {
    for (const auto& g : groups)
      if (g.lo == l && g.hi == h) return g;
    NeumaierSum a, s;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_setter(j)) continue;
      const double p = p_of(raw_ll[j], l, h);
      a.add(entropy_term(p));
      s.add(p);
    }
    groups.push_back({l, h, a.value(), s.value()});
    return groups.back();
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto [l, h] = range_without(i);
    const Group& g = group_for(l, h);
    double a = g.a, s = g.s;
    if (!is_setter(i)) {
      const double p = p_of(raw_ll[i], l, h);
      a -= entropy_term(p);
      s -= p;
    }
    for (std::size_t j : setters) {
      if (j == i) continue;
      const double p = p_of(raw_ll[j], l, h);
      a += entropy_term(p);
      s += p;
    }
    const double held_out = simplex ? a / s + std::log(s) : a;
    deltas[i] = total - held_out;
  }
  return deltas;
}

}  // namespace

ScoreVector scores_from_log_likelihoods(std::vector<double> raw_ll, const ScoreOptions& options) {
  if (raw_ll.empty()) invalid("cannot score an empty corpus");
  for (std::size_t i = 0; i < raw_ll.size(); ++i)
    if (!std::isfinite(raw_ll[i])) invalid(fmt::format("non-finite log-likelihood at row {}", i));

  ScoreVector sv;
  sv.simplex = options.simplex;
  const auto [min_it, max_it] = std::minmax_element(raw_ll.begin(), raw_ll.end());
  const double lo = *min_it;
  const double range = *max_it - lo;
  sv.degenerate = !(range > 0.0);
  const std::size_t n = raw_ll.size();
  sv.norm_ll.resize(n);
  sv.p.resize(n);
  sv.contrib.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sv.norm_ll[i] = sv.degenerate ? 0.0 : std::clamp((raw_ll[i] - lo) / range, 0.0, 1.0);
    sv.p[i] = std::exp(sv.norm_ll[i]);
  }
  if (options.simplex) {
    NeumaierSum s;
    for (double v : sv.p) s.add(v);
    const double total = s.value();
    for (auto& v : sv.p) v /= total;
  }
  for (std::size_t i = 0; i < n; ++i) sv.contrib[i] = entropy_term(sv.p[i]);
  sv.raw_ll = std::move(raw_ll);
  return sv;
}

ScoreVector score_points(const GmmModel& model, const Matrix& embeddings, const ScoreOptions& options) {
  if (embeddings.empty()) invalid("cannot score an empty corpus");
  if (embeddings.cols() != model.dim())
    invalid(fmt::format("dimension mismatch: embeddings have {} columns, model has {}", embeddings.cols(), model.dim()));
  return scores_from_log_likelihoods(log_likelihoods(model, embeddings, options.threads), options);
}

double dataset_entropy(const ScoreVector& scores) {
  NeumaierSum h;
  for (double c : scores.contrib) h.add(c);
  return h.value();
}

EntropyReport entropy_deltas(const ScoreVector& scores, const DeltaOptions& options) {
  const std::size_t n = scores.size();
  EntropyReport report;
  report.mode = options.mode;
  report.total_entropy = dataset_entropy(scores);
  report.deltas.resize(n);

  if (!options.renormalize) {
    if (options.mode == DeltaMode::analytic) {
      // H - H' telescopes to the held-out point's own term.
      report.deltas = scores.contrib;
      return report;
    }
    for (std::size_t held = 0; held < n; ++held) {
      NeumaierSum rest;
      for (std::size_t j = 0; j < n; ++j)
        if (j != held) rest.add(-scores.p[j] * std::log(scores.p[j]));
      report.deltas[held] = report.total_entropy - rest.value();
    }
    return report;
  }

  if (options.mode == DeltaMode::analytic) {
    report.deltas = renormalized_deltas_fast(scores.raw_ll, scores.simplex, report.total_entropy);
    return report;
  }
  std::vector<std::size_t> members;
  members.reserve(n);
  for (std::size_t held = 0; held < n; ++held) {
    members.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != held) members.push_back(j);
    report.deltas[held] = report.total_entropy - renormalized_entropy(scores.raw_ll, members, scores.simplex);
  }
  return report;
}

Selection select_isa(const EntropyReport& report, std::size_t k) {
  if (k < 1) invalid("k must be >= 1");
  const std::size_t n = report.deltas.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.deltas[a] > report.deltas[b]; });
  order.resize(std::min(k, n));

  Selection sel;
  sel.strategy = Strategy::isa;
  sel.k = k;
  sel.indices = order;
  sel.scores.reserve(order.size());
  for (std::size_t i : order) sel.scores.push_back(report.deltas[i]);
  return sel;
}

Selection select_isa(const ScoreVector& scores, std::size_t k) { return select_isa(entropy_deltas(scores), k); }

}  // namespace isa
