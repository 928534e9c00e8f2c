#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wxscale/grid.hpp"

namespace wxscale {

/// Reserved channel name carrying pooled (all-channel) RMSE.
inline constexpr std::string_view kPooledChannel = "__pooled__";

inline constexpr int kModelStepHours = 6;

struct MetricRecord {
  std::string run_id;
  std::int64_t ic_timestamp = 0;
  int lead_hours = 0;
  std::string channel;
  double rmse = 0.0;

  bool operator==(const MetricRecord&) const = default;
};

/// Area-weighted RMSE of every schema channel (static channels included).
std::vector<double> area_weighted_rmse(const FieldState& pred, const FieldState& truth);

/// Same computation on raw channel-major buffers with explicit row weights.
std::vector<double> area_weighted_rmse(std::span<const double> pred, std::span<const double> truth,
                                       std::size_t n_channels, std::size_t n_lon,
                                       std::span<const double> lat_weights);

/// Unweighted RMSE over all forecast channels and grid points.
double pooled_rmse(const FieldState& pred, const FieldState& truth);

/// Uniform MSE over forecast channels; the square of pooled_rmse.
double mse_loss(const FieldState& pred, const FieldState& truth);

struct ErrorGrowthCurve {
  std::string channel;
  std::vector<int> lead_hours;
  std::vector<double> d_rmse_dt;  // error units per hour
};

/// d(RMSE)/dt by central differences at interior leads, one-sided at the ends.
/// Leads must be strictly increasing and at least two.
ErrorGrowthCurve error_growth(std::span<const int> lead_hours, std::span<const double> rmse,
                              std::string channel = {});

/// Centred moving average with a window that shrinks at the ends. Window must be odd.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

// metrics.csv: run_id, ic_timestamp, lead_hours, channel, rmse
void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records);
std::string metrics_csv(std::span<const MetricRecord> records);
std::vector<MetricRecord> parse_metrics_csv(std::string_view text);

}  // namespace wxscale
