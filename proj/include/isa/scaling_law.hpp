#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace isa {

/// One winrate observation; x is the percentage of data used (0-100).
struct WinratePoint {
  double x = 0.0;
  double winrate = 0.0;
  std::optional<double> ci95;
};

enum class FitMode { pinned, full };

std::string_view to_string(FitMode mode);
FitMode parse_fit_mode(std::string_view name);

/// Exponential plateau R(x) = r - (r - a) exp(-b x).
struct ScalingLawFit {
  double r = 0.0;  // asymptote
  double a = 0.0;  // value at x = 0
  double b = 0.0;  // growth rate per percent
  double sse = 0.0;
  FitMode mode = FitMode::pinned;
  int iterations = 0;
};

struct FitOptions {
  bool weighted = false;  // weight residuals by 1 / ci95^2
};

double predict(const ScalingLawFit& fit, double x);

/// a = winrate at x = 0, r = max winrate; b >= 0 by log-grid search over
/// [1e-4, 10] followed by golden-section refinement to a bracket under 1e-6.
ScalingLawFit fit_pinned(const std::vector<WinratePoint>& points, const FitOptions& options = {});

/// Three-parameter least squares started from fit_pinned, by damped
/// Gauss-Newton (Marquardt-scaled) with analytic derivatives. Only steps that
/// lower the SSE are accepted.
ScalingLawFit fit_full(const std::vector<WinratePoint>& points, const FitOptions& options = {});

double sum_squared_residuals(const ScalingLawFit& fit, const std::vector<WinratePoint>& points,
                             const FitOptions& options = {});

/// CSV with header "x,winrate" or "x,winrate,ci95".
std::vector<WinratePoint> parse_winrate_csv(std::string_view text);
std::vector<WinratePoint> read_winrate_csv(const std::filesystem::path& path);

std::string to_json(const ScalingLawFit& fit);
/// "x,predicted" rows at 1-percent steps from 0 to 100.
std::string curve_csv(const ScalingLawFit& fit);

}  // namespace isa
