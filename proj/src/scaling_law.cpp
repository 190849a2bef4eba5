#include "isa/scaling_law.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "isa/error.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "scaling-law";
constexpr double kGridLo = 1e-4;
constexpr double kGridHi = 10.0;
constexpr int kGridPoints = 201;
constexpr double kBracketTol = 1e-6;
constexpr int kMaxIters = 500;
constexpr double kRelTol = 1e-10;

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }

std::vector<double> weights_for(const std::vector<WinratePoint>& points, const FitOptions& options) {
  std::vector<double> w(points.size(), 1.0);
  if (!options.weighted) return w;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].ci95 || !(*points[i].ci95 > 0.0))
      invalid(fmt::format("weighted fit needs a positive ci95 for every point (row {})", i));
    w[i] = 1.0 / (*points[i].ci95 * *points[i].ci95);
  }
  return w;
}

void check_points(const std::vector<WinratePoint>& points, std::size_t min_points) {
  if (points.size() < min_points)
    invalid(fmt::format("insufficient points: need at least {}, got {}", min_points, points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || p.x < 0.0 || p.x > 100.0) invalid(fmt::format("row {}: x={} outside [0, 100]", i, p.x));
    if (!std::isfinite(p.winrate) || p.winrate < 0.0 || p.winrate > 100.0)
      invalid(fmt::format("row {}: winrate={} outside [0, 100]", i, p.winrate));
    if (p.ci95 && (!std::isfinite(*p.ci95) || *p.ci95 < 0.0)) invalid(fmt::format("row {}: negative ci95", i));
  }
  const bool flat = std::all_of(points.begin(), points.end(),
                                [&](const WinratePoint& p) { return p.winrate == points.front().winrate; });
  if (flat) invalid("flat data: all winrates are equal");
}

double sse_of(double r, double a, double b, const std::vector<WinratePoint>& points, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double e = points[i].winrate - (r - (r - a) * std::exp(-b * points[i].x));
    s += w[i] * e * e;
  }
  return s;
}

// Solves the symmetric 3x3 system m * x = v by Gaussian elimination with
// partial pivoting. Returns false if singular.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> v, std::array<double, 3>& x) {
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    if (!(std::abs(m[piv][c]) > 0.0)) return false;
    std::swap(m[c], m[piv]);
    std::swap(v[c], v[piv]);
    for (int r = c + 1; r < 3; ++r) {
      const double f = m[r][c] / m[c][c];
      for (int k = c; k < 3; ++k) m[r][k] -= f * m[c][k];
      v[r] -= f * v[c];
    }
  }
  for (int c = 2; c >= 0; --c) {
    double s = v[c];
    for (int k = c + 1; k < 3; ++k) s -= m[c][k] * x[k];
    x[c] = s / m[c][c];
  }
  return std::all_of(x.begin(), x.end(), [](double t) { return std::isfinite(t); });
}

}  // namespace

std::string_view to_string(FitMode mode) { return mode == FitMode::pinned ? "pinned" : "full"; }

FitMode parse_fit_mode(std::string_view name) {
  if (name == "pinned") return FitMode::pinned;
  if (name == "full") return FitMode::full;
  invalid(fmt::format("unknown fit mode '{}'", name));
}

double predict(const ScalingLawFit& fit, double x) { return fit.a - (fit.r - fit.a) * std::expm1(-fit.b * x); }

double sum_squared_residuals(const ScalingLawFit& fit, const std::vector<WinratePoint>& points,
                             const FitOptions& options) {
  return sse_of(fit.r, fit.a, fit.b, points, weights_for(points, options));
}

ScalingLawFit fit_pinned(const std::vector<WinratePoint>& points, const FitOptions& options) {
  check_points(points, 3);
  const auto w = weights_for(points, options);
  const auto origin_count = std::count_if(points.begin(), points.end(), [](const WinratePoint& p) { return p.x == 0.0; });
  if (origin_count == 0) invalid("pinned fit needs a point at x=0");
  if (origin_count > 1) invalid("pinned fit needs exactly one point at x=0");

  ScalingLawFit fit;
  fit.mode = FitMode::pinned;
  fit.a = std::find_if(points.begin(), points.end(), [](const WinratePoint& p) { return p.x == 0.0; })->winrate;
  fit.r = std::max_element(points.begin(), points.end(), [](const WinratePoint& l, const WinratePoint& r) {
            return l.winrate < r.winrate;
          })->winrate;
  if (fit.r == fit.a) invalid("flat data: maximum winrate equals the x=0 winrate (r == a)");

  auto objective = [&](double b) { return sse_of(fit.r, fit.a, b, points, w); };

  std::array<double, kGridPoints> grid{};
  const double step = std::log(kGridHi / kGridLo) / (kGridPoints - 1);
  for (int i = 0; i < kGridPoints; ++i) grid[i] = kGridLo * std::exp(step * i);
  grid.back() = kGridHi;
  int best = 0;
  double best_sse = objective(grid[0]);
  for (int i = 1; i < kGridPoints; ++i) {
    const double s = objective(grid[i]);
    if (s < best_sse) {
      best_sse = s;
      best = i;
    }
  }

  double lo = grid[std::max(best - 1, 0)];
  double hi = grid[std::min(best + 1, kGridPoints - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = objective(c), fd = objective(d);
  int iters = 0;
  while (hi - lo >= kBracketTol) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = objective(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = objective(d);
    }
    ++iters;
  }
  const double refined = 0.5 * (lo + hi);
  const double refined_sse = objective(refined);
  fit.b = refined_sse <= best_sse ? refined : grid[best];
  fit.sse = std::min(refined_sse, best_sse);
  fit.iterations = iters;
  return fit;
}

ScalingLawFit fit_full(const std::vector<WinratePoint>& points, const FitOptions& options) {
  check_points(points, 4);
  const auto w = weights_for(points, options);

  // Start from the pinned fit when it applies, else from the endpoints.
  ScalingLawFit start;
  try {
    start = fit_pinned(points, options);
  } catch (const Error&) {
    auto by_x = points;
    std::sort(by_x.begin(), by_x.end(), [](const WinratePoint& l, const WinratePoint& r) { return l.x < r.x; });
    start.a = by_x.front().winrate;
    start.r = std::max_element(points.begin(), points.end(), [](const WinratePoint& l, const WinratePoint& r) {
                return l.winrate < r.winrate;
              })->winrate;
    start.b = 0.05;
    start.sse = sse_of(start.r, start.a, start.b, points, w);
  }

  std::array<double, 3> theta{start.r, start.a, start.b};
  double sse = sse_of(theta[0], theta[1], theta[2], points, w);
  double lambda = 1e-3;
  int it = 0;
  for (; it < kMaxIters; ++it) {
    std::array<std::array<double, 3>, 3> jtj{};
    std::array<double, 3> jte{};
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double x = points[i].x;
      const double e = std::exp(-theta[2] * x);
      const double resid = points[i].winrate - (theta[0] - (theta[0] - theta[1]) * e);
      const std::array<double, 3> g{1.0 - e, e, (theta[0] - theta[1]) * x * e};
      for (int p = 0; p < 3; ++p) {
        jte[p] += w[i] * g[p] * resid;
        for (int q = 0; q < 3; ++q) jtj[p][q] += w[i] * g[p] * g[q];
      }
    }

    bool accepted = false;
    while (lambda < 1e16) {
      auto damped = jtj;
      for (int p = 0; p < 3; ++p) damped[p][p] += lambda * std::max(jtj[p][p], 1e-12);
      std::array<double, 3> delta{};
      if (solve3(damped, jte, delta)) {
        std::array<double, 3> cand{theta[0] + delta[0], theta[1] + delta[1], std::max(0.0, theta[2] + delta[2])};
        const double cand_sse = sse_of(cand[0], cand[1], cand[2], points, w);
        if (std::isfinite(cand_sse) && cand_sse < sse) {
          const double gain = (sse - cand_sse) / sse;
          theta = cand;
          sse = cand_sse;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          if (gain < kRelTol || sse == 0.0) it = kMaxIters;  // converged
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
  }
  if (!std::all_of(theta.begin(), theta.end(), [](double t) { return std::isfinite(t); }))
    invalid(fmt::format("divergence: last finite iterate r={}, a={}, b={}", start.r, start.a, start.b));

  ScalingLawFit fit;
  fit.mode = FitMode::full;
  fit.r = theta[0];
  fit.a = theta[1];
  fit.b = theta[2];
  fit.sse = sse;
  fit.iterations = std::min(it, kMaxIters);
  return fit;
}

std::vector<WinratePoint> parse_winrate_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
  };
  auto split = [&](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) invalid("empty CSV: expected header 'x,winrate[,ci95]'");
  const auto header = split(trim(line));
  const bool with_ci = header == std::vector<std::string>{"x", "winrate", "ci95"};
  if (!with_ci && header != std::vector<std::string>{"x", "winrate"})
    invalid(fmt::format("bad CSV header '{}': expected columns 'x,winrate' or 'x,winrate,ci95'", trim(line)));

  std::vector<WinratePoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      invalid(fmt::format("CSV line {}: expected {} columns, got {}", line_no, header.size(), cells.size()));
    auto number = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size()) invalid(fmt::format("CSV line {}: '{}' is not a number", line_no, s));
      return v;
    };
    WinratePoint p;
    p.x = number(cells[0]);
    p.winrate = number(cells[1]);
    if (with_ci && !cells[2].empty()) p.ci95 = number(cells[2]);
    points.push_back(p);
  }
  return points;
}

std::vector<WinratePoint> read_winrate_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, ErrorKind::runtime, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_winrate_csv(ss.str());
}

std::string to_json(const ScalingLawFit& fit) {
  nlohmann::ordered_json j;
  j["r"] = fit.r;
  j["a"] = fit.a;
  j["b"] = fit.b;
  j["sse"] = fit.sse;
  j["mode"] = std::string(to_string(fit.mode));
  return j.dump(2) + "\n";
}

std::string curve_csv(const ScalingLawFit& fit) {
  std::string out = "x,predicted\n";
  for (int x = 0; x <= 100; ++x) out += fmt::format("{},{:.17g}\n", x, predict(fit, x));
  return out;
}

}  // namespace isa
