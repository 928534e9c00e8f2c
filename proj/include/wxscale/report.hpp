#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wxscale/metrics.hpp"
#include "wxscale/rollout.hpp"
#include "wxscale/scaling.hpp"

namespace wxscale::report {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Every figure is rendered from the same struct its CSV parses into, so
// parse(csv) -> render reproduces the SVG byte for byte.

/// Lead x channel grid; NaN marks failed or undefined cells.
struct Heatmap {
  std::vector<int> leads;
  std::vector<std::string> channels;
  std::vector<double> values;  // row-major: leads x channels

  double at(std::size_t lead_index, std::size_t channel_index) const {
    return values[lead_index * channels.size() + channel_index];
  }
};

enum class HeatmapField { kR2, kSlope };

Heatmap heatmap_from_sweep(const SweepResult& result, Covariate covariate, HeatmapField field);
std::string heatmap_csv(const Heatmap& h);
Heatmap parse_heatmap_csv(std::string_view text);

/**
 * Heatmap with a linear ramp from gray (#3c3c3c) at the minimum to warm
 * (#f46d43) at the maximum of the finite values (r2 uses the fixed range
 * [0, 1] with values clamped). NaN cells are hatched.
 */
std::string heatmap_svg(const Heatmap& h, std::string_view title, bool unit_range);

/// Curves sharing one x axis.
struct CurveSet {
  std::string x_label;
  std::vector<double> x;
  std::vector<std::string> names;
  std::vector<std::vector<double>> ys;  // one per name, same length as x
};

std::string curves_csv(const CurveSet& c);
CurveSet parse_curves_csv(std::string_view text);
std::string curves_svg(const CurveSet& c, std::string_view title, std::string_view y_label);

/// One channel's curve inside a unit-grouped panel figure.
struct PanelSeries {
  std::string channel;
  std::string unit;
  std::vector<int> leads;
  std::vector<double> values;
};

/// Long format: channel, unit, lead_hours, value.
std::string panels_csv(std::span<const PanelSeries> series, std::string_view value_name);
std::vector<PanelSeries> parse_panels_csv(std::string_view text);
/// One panel per unit, in order of first appearance.
std::string panels_svg(std::span<const PanelSeries> series, std::string_view title,
                       std::string_view y_label);

struct BoxStats {
  std::string channel;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  std::size_t n = 0;
};

/// Per-channel quartiles (linear interpolation) of RMSE at one lead, in order
/// of first appearance.
std::vector<BoxStats> box_stats(std::span<const MetricRecord> records, int lead_hours);
std::string box_csv(std::span<const BoxStats> boxes);
std::vector<BoxStats> parse_box_csv(std::string_view text);
std::string box_svg(std::span<const BoxStats> boxes, std::string_view title);

/// Display unit for a channel name; "normalized" for the pooled channel.
std::string unit_for_channel(std::string_view channel);

/// Error-growth curves of IC-averaged RMSE, with optional centred smoothing.
std::vector<PanelSeries> derive_error_growth(std::span<const MetricRecord> records,
                                             std::size_t smooth_window = 1);

enum class FigureKind { kHeatmapUnit, kHeatmap, kCurves, kPanels, kBox };

std::string_view to_string(FigureKind k);
FigureKind figure_kind_from_string(std::string_view s);

/// Re-renders a figure from its paired CSV text.
std::string render_figure(FigureKind kind, std::string_view csv_text, std::string_view title,
                          std::string_view y_label);

/**
 * Output directory writer. Files are written atomically; the manifest
 * lists input and output CRC-32s and how every SVG pairs with its CSV.
 */
class Bundle {
 public:
  explicit Bundle(std::filesystem::path dir);

  void add_input(const std::filesystem::path& path);
  void write(const std::string& name, std::string_view text);
  /// Writes `<stem>.csv` and `<stem>.svg` rendered from that CSV.
  void figure(const std::string& stem, FigureKind kind, const std::string& csv,
              const std::string& title, const std::string& y_label = {});
  void note(const std::string& key, nlohmann::ordered_json value);
  /// Writes manifest.json.
  void finish(const std::string& command);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  nlohmann::ordered_json figures_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json notes_ = nlohmann::ordered_json::object();
};

}  // namespace wxscale::report
