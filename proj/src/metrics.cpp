#include "wxscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"

namespace wxscale {

std::vector<double> area_weighted_rmse(std::span<const double> pred, std::span<const double> truth,
                                       std::size_t n_channels, std::size_t n_lon,
                                       std::span<const double> lat_weights) {
  const std::size_t n_lat = lat_weights.size();
  const std::size_t np = n_lat * n_lon;
  if (pred.size() != truth.size() || pred.size() != n_channels * np) {
    throw Error(ErrorCode::kSchemaMismatch, "prediction and truth buffers differ in shape");
  }
  std::vector<double> out(n_channels);
  for (std::size_t c = 0; c < n_channels; ++c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n_lat; ++j) {
      double row = 0.0;
      const std::size_t base = (c * n_lat + j) * n_lon;
      for (std::size_t k = 0; k < n_lon; ++k) {
        const double p = pred[base + k];
        const double t = truth[base + k];
        if (!std::isfinite(p) || !std::isfinite(t)) {
          throw Error(ErrorCode::kNonFinite, "non-finite input to area_weighted_rmse");
        }
        row += (p - t) * (p - t);
      }
      acc += lat_weights[j] * row;
    }
    out[c] = std::sqrt(acc / static_cast<double>(np));
  }
  return out;
}

std::vector<double> area_weighted_rmse(const FieldState& pred, const FieldState& truth) {
  require_same_layout(pred, truth);
  const auto w = latitude_weights(pred.grid());
  return area_weighted_rmse(pred.values(), truth.values(), pred.schema().total(),
                            pred.grid().n_lon(), w);
}

double mse_loss(const FieldState& pred, const FieldState& truth) {
  require_same_layout(pred, truth);
  const std::size_t np = pred.grid().points();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < pred.schema().total(); ++c) {
    if (!pred.schema()[c].forecast()) continue;
    const auto p = pred.channel(c);
    const auto t = truth.channel(c);
    for (std::size_t i = 0; i < np; ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
    count += np;
  }
  return acc / static_cast<double>(count);
}

double pooled_rmse(const FieldState& pred, const FieldState& truth) {
  return std::sqrt(mse_loss(pred, truth));
}

ErrorGrowthCurve error_growth(std::span<const int> lead_hours, std::span<const double> rmse,
                              std::string channel) {
  if (lead_hours.size() != rmse.size()) {
    throw Error(ErrorCode::kInvalidArgument, "lead and rmse series differ in length");
  }
  const std::size_t n = lead_hours.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "error growth needs at least two leads");
  for (std::size_t i = 1; i < n; ++i) {
    if (lead_hours[i] == lead_hours[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate lead " + std::to_string(lead_hours[i]) + " h");
    }
    if (lead_hours[i] < lead_hours[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "leads must be strictly increasing");
    }
  }
  ErrorGrowthCurve curve;
  curve.channel = std::move(channel);
  curve.lead_hours.assign(lead_hours.begin(), lead_hours.end());
  curve.d_rmse_dt.resize(n);
  auto slope = [&](std::size_t a, std::size_t b) {
    return (rmse[b] - rmse[a]) / static_cast<double>(lead_hours[b] - lead_hours[a]);
  };
  curve.d_rmse_dt[0] = slope(0, 1);
  curve.d_rmse_dt[n - 1] = slope(n - 2, n - 1);
  for (std::size_t i = 1; i + 1 < n; ++i) curve.d_rmse_dt[i] = slope(i - 1, i + 1);
  return curve;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0 || window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "moving-average window must be odd");
  }
  const std::size_t half = window / 2;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(values.size() - 1, i + half);
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += values[k];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRecord> records) {
  out << "run_id,ic_timestamp,lead_hours,channel,rmse\n";
  for (const auto& r : records) {
    if (r.run_id.find(',') != std::string::npos || r.channel.find(',') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "commas are not allowed in run or channel ids");
    }
    out << r.run_id << ',' << r.ic_timestamp << ',' << r.lead_hours << ',' << r.channel << ','
        << io::format_double(r.rmse) << '\n';
  }
}

std::string metrics_csv(std::span<const MetricRecord> records) {
  std::ostringstream ss;
  write_metrics_csv(ss, records);
  return ss.str();
}

std::vector<MetricRecord> parse_metrics_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  const auto c_run = table.column("run_id");
  const auto c_ic = table.column("ic_timestamp");
  const auto c_lead = table.column("lead_hours");
  const auto c_ch = table.column("channel");
  const auto c_rmse = table.column("rmse");
  std::vector<MetricRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    try {
      MetricRecord r;
      r.run_id = row[c_run];
      r.ic_timestamp = io::parse_int(row[c_ic]);
      r.lead_hours = static_cast<int>(io::parse_int(row[c_lead]));
      r.channel = row[c_ch];
      r.rmse = io::parse_double(row[c_rmse]);
      if (!std::isfinite(r.rmse) || r.rmse < 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "rmse must be finite and non-negative");
      }
      if (r.lead_hours <= 0 || r.lead_hours % kModelStepHours != 0) {
        throw Error(ErrorCode::kInvalidArgument, "lead_hours must be a positive multiple of 6");
      }
      out.push_back(std::move(r));
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(table.line_numbers[i], e.what());
    }
  }
  return out;
}

}  // namespace wxscale
