#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/metrics.hpp"

namespace wxscale {

/// Default cost-model constant in C = kappa * N * D.
inline constexpr double kDefaultKappa = 6.0;

/// Fit failure carrying a machine-readable reason such as "non_convex".
class FitError : public Error {
 public:
  FitError(std::string reason, const std::string& what)
      : Error(ErrorCode::kFitFailure, what), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

enum class Covariate { kParams, kData, kCompute };

std::string_view to_string(Covariate c);
Covariate covariate_from_string(std::string_view s);
/// Comma-separated list, e.g. "params,data,compute".
std::vector<Covariate> parse_covariates(std::string_view text);

struct RunPoint {
  std::string run_id;
  double n_params = 0.0;
  double d_samples = 0.0;
  double c_flops = 0.0;
  std::string budget_id;

  bool operator==(const RunPoint&) const = default;
};

/// Positive N, D, C; unique run ids; every budget shares C within 1 %.
void validate_runs(std::span<const RunPoint> runs);

std::string runs_csv(std::span<const RunPoint> runs);
std::vector<RunPoint> parse_runs_csv(std::string_view text);

/// Least-squares y = q x^2 + r x + s.
struct Quadratic {
  double q = 0.0;
  double r = 0.0;
  double s = 0.0;
};

Quadratic fit_quadratic(std::span<const double> x, std::span<const double> y);

struct IsoflopOptimum {
  std::string budget_id;
  double c_flops = 0.0;
  double n_star = 0.0;
  double d_star = 0.0;
  double eps_star = 0.0;
  double curvature = 0.0;
  std::size_t n_points = 0;
  /// Vertex lies outside the swept N range.
  bool extrapolated = false;
};

/**
 * Stage 1: quadratic in (log N, log eps), vertex at -r / 2q.
 *
 * Throws FitError "insufficient_runs" for fewer than three distinct N and
 * "non_convex" when the fitted curvature is not positive.
 */
IsoflopOptimum fit_isoflop_optimum(std::span<const double> n_params, std::span<const double> eps,
                                   double c_flops, double kappa = kDefaultKappa,
                                   std::string budget_id = {});

struct PowerLawFit {
  Covariate covariate = Covariate::kCompute;
  int lead_hours = 0;
  std::string channel;
  double intercept = 0.0;  // a in log eps = a + b log s
  double slope = 0.0;      // b
  double r2 = 0.0;         // NaN when log eps has zero variance
  std::size_t n_points = 0;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const;
};

/// Stage 2: OLS of log eps on log s (natural logs).
PowerLawFit fit_power_law(std::span<const double> s, std::span<const double> eps);

struct AllocationFit {
  double alpha = 0.0;
  double beta = 0.0;
  double alpha_plus_beta = 0.0;
  double tolerance = 0.05;
  /// |alpha + beta - 1| <= tolerance.
  bool consistent = false;
  std::size_t n_budgets = 0;
};

AllocationFit fit_allocation(std::span<const IsoflopOptimum> optima, double tolerance = 0.05);

struct SweepOptions {
  std::vector<Covariate> covariates{Covariate::kParams, Covariate::kData, Covariate::kCompute};
  std::vector<int> leads;              // empty: every lead in the records
  std::vector<std::string> channels;   // empty: every channel in the records
  double kappa = kDefaultKappa;
  double allocation_tolerance = 0.05;
};

struct SweepCell {
  int lead_hours = 0;
  std::string channel;
  /// "ok" or a failure code: insufficient_runs, non_convex, insufficient_budgets,
  /// zero_covariate_variance.
  std::string status = "ok";
  std::string detail;
  std::vector<IsoflopOptimum> optima;
  std::vector<PowerLawFit> fits;  // one per requested covariate when status is ok
  std::optional<AllocationFit> allocation;

  const PowerLawFit* fit(Covariate c) const;
};

struct SweepResult {
  std::vector<Covariate> covariates;
  std::vector<int> leads;
  std::vector<std::string> channels;
  std::vector<SweepCell> cells;  // lead-major, channels in order
  double kappa = kDefaultKappa;

  const SweepCell& at(int lead, std::string_view channel) const;
};

/**
 * Two-stage fit for every (lead, channel) cell.
 *
 * Records are averaged over ICs per (run, lead, channel) and joined to runs by
 * run_id. A cell fails as a whole when any budget fails stage 1; failed cells
 * keep their status code and are never dropped.
 */
SweepResult sweep(std::span<const RunPoint> runs, std::span<const MetricRecord> records,
                  const SweepOptions& options = {});

/// Fit report: covariate -> lead -> channel -> {a, b, r2, n_points, status, flags}.
nlohmann::ordered_json fit_report_json(const SweepResult& result);

}  // namespace wxscale
