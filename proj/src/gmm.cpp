#include "isa/gmm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "isa/error.hpp"
#include "isa/parallel.hpp"
#include "isa/rng.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "gmm";
constexpr std::size_t kSeedSample = 1024;
constexpr std::size_t kBlockRows = 256;
constexpr double kMixFloor = 1e-12;
constexpr double kMinWeight = 1e-300;

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }

/// Precomputed form of one diagonal Gaussian.
struct Component {
  double log_weight = 0.0;
  double log_norm = 0.0;  // -0.5 * (d log 2pi + sum log var)
  const std::vector<double>* mean = nullptr;
  std::vector<double> inv_var;

  Component(double weight, const std::vector<double>& mu, const std::vector<double>& var)
      : log_weight(std::log(weight)), mean(&mu), inv_var(var.size()) {
    double log_det = 0.0;
    for (std::size_t j = 0; j < var.size(); ++j) {
      log_det += std::log(var[j]);
      inv_var[j] = 1.0 / var[j];
    }
    log_norm = -0.5 * (static_cast<double>(var.size()) * std::log(2.0 * std::numbers::pi) + log_det);
  }

  template <typename T>
  double log_joint(std::span<const T> x) const {
    const auto& mu = *mean;
    double quad = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = static_cast<double>(x[j]) - mu[j];
      quad += diff * diff * inv_var[j];
    }
    return log_weight + log_norm - 0.5 * quad;
  }
};

struct Evaluator {
  Component c1, c2;
  explicit Evaluator(const GmmModel& m) : c1(m.mix, m.mean1, m.var1), c2(1.0 - m.mix, m.mean2, m.var2) {}

  // Returns (log-likelihood, log gamma1, log gamma2).
  template <typename T>
  std::array<double, 3> eval(std::span<const T> x) const {
    const double a = c1.log_joint(x);
    const double b = c2.log_joint(x);
    const double hi = std::max(a, b);
    const double ll = hi + std::log1p(std::exp(std::min(a, b) - hi));
    return {ll, a - ll, b - ll};
  }
};

template <typename T>
void check_dim(const GmmModel& model, std::span<const T> point) {
  if (point.size() != model.dim())
    invalid(fmt::format("dimension mismatch: point has {} entries, model has {}", point.size(), model.dim()));
}

double total_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

struct EStep {
  std::vector<double> ll, g1, g2;
  double total = 0.0;
};

EStep e_step(const GmmModel& model, const Matrix& x, unsigned threads) {
  const Evaluator ev(model);
  EStep out;
  out.ll.resize(x.rows());
  out.g1.resize(x.rows());
  out.g2.resize(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t i) {
    const auto [ll, lg1, lg2] = ev.eval(x.row(i));
    out.ll[i] = ll;
    out.g1[i] = std::exp(lg1);
    out.g2[i] = std::exp(lg2);
  });
  out.total = total_in_order(out.ll);
  return out;
}

// Weighted per-dimension sums over fixed row blocks, combined in block order so
// the result is independent of the thread count.
template <typename Term>
std::vector<double> blocked_sum(const Matrix& x, unsigned threads, Term term) {
  const std::size_t d = x.cols();
  const std::size_t blocks = (x.rows() + kBlockRows - 1) / kBlockRows;
  std::vector<double> partial(blocks * d, 0.0);
  parallel_for(blocks, threads, [&](std::size_t b) {
    double* acc = partial.data() + b * d;
    const std::size_t end = std::min(x.rows(), (b + 1) * kBlockRows);
    for (std::size_t i = b * kBlockRows; i < end; ++i) term(i, x.row(i), acc);
  });
  std::vector<double> total(d, 0.0);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < d; ++j) total[j] += partial[b * d + j];
  return total;
}

void m_step(GmmModel& model, const Matrix& x, const EStep& e, const EmConfig& cfg) {
  const std::size_t d = x.cols();
  const double w1 = total_in_order(e.g1);
  const double w2 = total_in_order(e.g2);

  auto update = [&](const std::vector<double>& g, double w, std::vector<double>& mean, std::vector<double>& var) {
    if (w < kMinWeight) return;  // empty component keeps its parameters
    auto s = blocked_sum(x, cfg.threads, [&](std::size_t i, std::span<const float> row, double* acc) {
      for (std::size_t j = 0; j < d; ++j) acc[j] += g[i] * row[j];
    });
    for (std::size_t j = 0; j < d; ++j) mean[j] = s[j] / w;
    auto q = blocked_sum(x, cfg.threads, [&](std::size_t i, std::span<const float> row, double* acc) {
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = row[j] - mean[j];
        acc[j] += g[i] * diff * diff;
      }
    });
    for (std::size_t j = 0; j < d; ++j) var[j] = std::max(q[j] / w, cfg.variance_floor);
  };
  update(e.g1, w1, model.mean1, model.var1);
  update(e.g2, w2, model.mean2, model.var2);
  model.mix = std::clamp(w1 / (w1 + w2), kMixFloor, 1.0 - kMixFloor);
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - b[j];
    s += diff * diff;
  }
  return s;
}

GmmModel initialize(const Matrix& x, const EmConfig& cfg) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();

  std::vector<std::size_t> pool;
  if (n <= kSeedSample) {
    pool.resize(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  } else {
    Rng rng(cfg.seed);
    pool = sample_indices(n, kSeedSample, rng);
    std::sort(pool.begin(), pool.end());
  }

  std::vector<double> best_for(pool.size(), -1.0);
  std::vector<std::size_t> partner(pool.size(), 0);
  parallel_for(pool.size(), cfg.threads, [&](std::size_t a) {
    for (std::size_t b = a + 1; b < pool.size(); ++b) {
      const double dist = squared_distance(x.row(pool[a]), x.row(pool[b]));
      if (dist > best_for[a]) {
        best_for[a] = dist;
        partner[a] = b;
      }
    }
  });
  std::size_t best_a = 0;
  for (std::size_t a = 1; a < pool.size(); ++a)
    if (best_for[a] > best_for[best_a]) best_a = a;
  std::size_t first = pool[best_a];
  std::size_t second = pool[partner[best_a]];
  if (best_for[best_a] <= 0.0) invalid("zero-variance corpus: all rows are identical");
  // Component 1 is seeded at the lexicographically smaller row so the
  // labelling does not depend on row order.
  {
    auto ra = x.row(first);
    auto rb = x.row(second);
    if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end())) std::swap(first, second);
  }

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(i, j) - mean[j];
      var[j] += diff * diff;
    }
  for (auto& v : var) v = std::max(v / static_cast<double>(n), cfg.variance_floor);

  GmmModel model;
  model.mix = 0.5;
  model.mean1.assign(x.row(first).begin(), x.row(first).end());
  model.mean2.assign(x.row(second).begin(), x.row(second).end());
  model.var1 = var;
  model.var2 = var;
  return model;
}

std::vector<double> json_vector(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array()) invalid(fmt::format("model JSON: \"{}\" must be an array", key));
  return it->get<std::vector<double>>();
}

}  // namespace

void validate(const GmmModel& m) {
  const std::size_t d = m.dim();
  if (d == 0) invalid("model has dimension 0");
  if (m.mean2.size() != d || m.var1.size() != d || m.var2.size() != d)
    invalid("model parameter vectors have inconsistent lengths");
  if (!(m.mix > 0.0 && m.mix < 1.0)) invalid(fmt::format("mix must lie in (0, 1), got {}", m.mix));
  for (std::size_t j = 0; j < d; ++j) {
    if (!std::isfinite(m.mean1[j]) || !std::isfinite(m.mean2[j])) invalid("model has a non-finite mean");
    if (!(m.var1[j] > 0.0) || !(m.var2[j] > 0.0) || !std::isfinite(m.var1[j]) || !std::isfinite(m.var2[j]))
      invalid("model has a non-positive or non-finite variance");
  }
}

GmmFit fit_gmm(const Matrix& x, const EmConfig& cfg) {
  if (cfg.max_iters < 1) invalid("max_iters must be >= 1");
  if (!(cfg.rel_tol > 0.0)) invalid("rel_tol must be > 0");
  if (!(cfg.variance_floor > 0.0)) invalid("variance_floor must be > 0");
  if (x.rows() < 2) invalid(fmt::format("need at least 2 rows to fit, got {}", x.rows()));
  if (x.cols() == 0) invalid("embeddings have no columns");
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (float v : x.row(i))
      if (!std::isfinite(v)) invalid(fmt::format("non-finite input at row {}", i));

  GmmFit fit;
  fit.model = initialize(x, cfg);
  EStep e = e_step(fit.model, x, cfg.threads);
  fit.log_likelihood_trace.push_back(e.total);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    m_step(fit.model, x, e, cfg);
    EStep next = e_step(fit.model, x, cfg.threads);
    const double gain = next.total - e.total;
    fit.log_likelihood_trace.push_back(next.total);
    fit.iterations = it;
    e = std::move(next);
    if (gain < cfg.rel_tol * std::abs(fit.log_likelihood_trace[fit.log_likelihood_trace.size() - 2])) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

double log_likelihood(const GmmModel& model, std::span<const double> point) {
  check_dim(model, point);
  return Evaluator(model).eval(point)[0];
}

double log_likelihood(const GmmModel& model, std::span<const float> point) {
  check_dim(model, point);
  return Evaluator(model).eval(point)[0];
}

std::vector<double> log_likelihoods(const GmmModel& model, const Matrix& x, unsigned threads) {
  if (!x.empty() && x.cols() != model.dim())
    invalid(fmt::format("dimension mismatch: embeddings have {} columns, model has {}", x.cols(), model.dim()));
  const Evaluator ev(model);
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), threads, [&](std::size_t i) { out[i] = ev.eval(x.row(i))[0]; });
  return out;
}

std::pair<double, double> responsibilities(const GmmModel& model, std::span<const double> point) {
  check_dim(model, point);
  const auto r = Evaluator(model).eval(point);
  return {std::exp(r[1]), std::exp(r[2])};
}

std::pair<double, double> responsibilities(const GmmModel& model, std::span<const float> point) {
  check_dim(model, point);
  const auto r = Evaluator(model).eval(point);
  return {std::exp(r[1]), std::exp(r[2])};
}

std::string to_json(const GmmModel& model) {
  nlohmann::ordered_json j;
  j["mix"] = model.mix;
  j["mean1"] = model.mean1;
  j["mean2"] = model.mean2;
  j["var1"] = model.var1;
  j["var2"] = model.var2;
  return j.dump() + "\n";
}

GmmModel gmm_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    invalid(fmt::format("malformed model JSON ({})", e.what()));
  }
  if (!j.is_object() || !j.contains("mix") || !j["mix"].is_number()) invalid("model JSON: \"mix\" must be a number");
  GmmModel m;
  try {
    m.mix = j["mix"].get<double>();
    m.mean1 = json_vector(j, "mean1");
    m.mean2 = json_vector(j, "mean2");
    m.var1 = json_vector(j, "var1");
    m.var2 = json_vector(j, "var2");
  } catch (const nlohmann::json::exception& e) {
    invalid(fmt::format("model JSON: {}", e.what()));
  }
  validate(m);
  return m;
}

void write_model(const GmmModel& model, const std::filesystem::path& path) {
  validate(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(kModule, ErrorKind::runtime, fmt::format("cannot write '{}'", path.string()));
  out << to_json(model);
}

GmmModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, ErrorKind::runtime, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return gmm_from_json(ss.str());
}

}  // namespace isa
