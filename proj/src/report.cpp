#include "wxscale/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "wxscale/errors.hpp"
#include "wxscale/grid.hpp"
#include "wxscale/io.hpp"

namespace wxscale::report {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fixed two-decimal output keeps SVG text stable across platforms.
std::string fx(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  std::string s(buf);
  if (s == "-0") s = "0";
  return s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string hex_color(double r, double g, double b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r)),
                static_cast<int>(std::lround(g)), static_cast<int>(std::lround(b)));
  return buf;
}

// Gray (#3c3c3c) to warm (#f46d43).
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return hex_color(60 + t * (244 - 60), 60 + t * (109 - 60), 60 + t * (67 - 60));
}

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                 "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};

void svg_open(std::ostringstream& out, double w, double h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << fx(w) << ' ' << fx(h)
      << "\" width=\"" << fx(w) << "\" height=\"" << fx(h)
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << fx(w) << "\" height=\"" << fx(h) << "\" fill=\"#ffffff\"/>\n";
}

void text(std::ostringstream& out, double x, double y, std::string_view s, std::string_view anchor = "start",
          std::string_view extra = {}) {
  out << "<text x=\"" << fx(x) << "\" y=\"" << fx(y) << "\" text-anchor=\"" << anchor << '"';
  if (!extra.empty()) out << ' ' << extra;
  out << '>' << xml_escape(s) << "</text>\n";
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range finite_range(std::span<const double> v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

// Line plot of several series inside [x0, x0 + w] x [y0, y0 + h]; NaN breaks lines.
void plot_lines(std::ostringstream& out, double x0, double y0, double w, double h,
                std::span<const double> x, const std::vector<std::vector<double>>& ys,
                std::string_view y_label, std::string_view x_label) {
  const Range xr = finite_range(x);
  std::vector<double> all;
  for (const auto& y : ys) all.insert(all.end(), y.begin(), y.end());
  const Range yr = finite_range(all);
  auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * w; };
  auto py = [&](double v) { return y0 + h - (v - yr.lo) / (yr.hi - yr.lo) * h; };

  out << "<rect x=\"" << fx(x0) << "\" y=\"" << fx(y0) << "\" width=\"" << fx(w) << "\" height=\"" << fx(h)
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xr.lo + (xr.hi - xr.lo) * k / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    text(out, px(xv), y0 + h + 12, label(xv), "middle");
    text(out, x0 - 4, py(yv) + 3, label(yv), "end");
    out << "<line x1=\"" << fx(x0) << "\" y1=\"" << fx(py(yv)) << "\" x2=\"" << fx(x0 + w) << "\" y2=\""
        << fx(py(yv)) << "\" stroke=\"#e0e0e0\"/>\n";
  }
  text(out, x0 + w / 2, y0 + h + 26, x_label, "middle");
  text(out, x0 - 44, y0 + h / 2, y_label, "middle",
       "transform=\"rotate(-90 " + fx(x0 - 44) + ' ' + fx(y0 + h / 2) + ")\"");
  for (std::size_t s = 0; s < ys.size(); ++s) {
    std::vector<std::string> segments;
    std::string current;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(ys[s][i]) || !std::isfinite(x[i])) {
        if (!current.empty()) segments.push_back(current);
        current.clear();
        continue;
      }
      if (!current.empty()) current += ' ';
      current += fx(px(x[i])) + ',' + fx(py(ys[s][i]));
    }
    if (!current.empty()) segments.push_back(current);
    for (const auto& seg : segments) {
      out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % kPalette.size()]
          << "\" stroke-width=\"1.5\" points=\"" << seg << "\"/>\n";
    }
  }
}

void legend(std::ostringstream& out, double x, double y, std::span<const std::string> names) {
  for (std::size_t s = 0; s < names.size(); ++s) {
    const double yy = y + 14.0 * static_cast<double>(s);
    out << "<rect x=\"" << fx(x) << "\" y=\"" << fx(yy - 8) << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[s % kPalette.size()] << "\"/>\n";
    text(out, x + 14, yy, names[s]);
  }
}

double quantile(std::vector<double> sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Heatmap heatmap_from_sweep(const SweepResult& result, Covariate covariate, HeatmapField field) {
  Heatmap h;
  h.leads = result.leads;
  h.channels = result.channels;
  for (int lead : result.leads) {
    for (const auto& ch : result.channels) {
      const auto* fit = result.at(lead, ch).fit(covariate);
      h.values.push_back(fit == nullptr ? kNaN : field == HeatmapField::kR2 ? fit->r2 : fit->slope);
    }
  }
  return h;
}

std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream out;
  out << "lead_hours";
  for (const auto& c : h.channels) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < h.leads.size(); ++i) {
    out << h.leads[i];
    for (std::size_t j = 0; j < h.channels.size(); ++j) out << ',' << io::format_double(h.at(i, j));
    out << '\n';
  }
  return out.str();
}

Heatmap parse_heatmap_csv(std::string_view text) {
  const auto t = io::parse_csv(text);
  if (t.header.empty() || t.header.front() != "lead_hours") {
    throw JoinError(1, "heatmap CSV must start with lead_hours");
  }
  Heatmap h;
  h.channels.assign(t.header.begin() + 1, t.header.end());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    try {
      h.leads.push_back(static_cast<int>(io::parse_int(t.rows[i][0])));
      for (std::size_t j = 1; j < t.rows[i].size(); ++j) h.values.push_back(io::parse_double(t.rows[i][j]));
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(t.line_numbers[i], e.what());
    }
  }
  return h;
}

std::string heatmap_svg(const Heatmap& h, std::string_view title, bool unit_range) {
  const double cell_w = 36, cell_h = 14, left = 64, top = 84;
  const double nc = static_cast<double>(h.channels.size());
  const double nl = static_cast<double>(h.leads.size());
  const double width = left + nc * cell_w + 110;
  const double height = std::max(top + nl * cell_h + 24, top + 200);
  const Range r = unit_range ? Range{0.0, 1.0} : finite_range(h.values);

  std::ostringstream out;
  svg_open(out, width, height);
  out << "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
         "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>"
         "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/></pattern></defs>\n";
  text(out, left, 16, title, "start", "font-size=\"12\"");
  for (std::size_t j = 0; j < h.channels.size(); ++j) {
    const double x = left + (static_cast<double>(j) + 0.5) * cell_w;
    text(out, x, top - 6, h.channels[j], "start",
         "transform=\"rotate(-60 " + fx(x) + ' ' + fx(top - 6) + ")\"");
  }
  text(out, left - 8, top - 6, "lead (h)", "end");
  for (std::size_t i = 0; i < h.leads.size(); ++i) {
    const double y = top + static_cast<double>(i) * cell_h;
    text(out, left - 4, y + cell_h - 3, std::to_string(h.leads[i]), "end");
    for (std::size_t j = 0; j < h.channels.size(); ++j) {
      const double v = h.at(i, j);
      const std::string fill =
          std::isfinite(v) ? ramp((v - r.lo) / (r.hi - r.lo)) : std::string("url(#hatch)");
      out << "<rect x=\"" << fx(left + static_cast<double>(j) * cell_w) << "\" y=\"" << fx(y)
          << "\" width=\"" << fx(cell_w) << "\" height=\"" << fx(cell_h) << "\" fill=\"" << fill
          << "\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
    }
  }
  // Colour bar, ten steps from the minimum at the bottom to the maximum at the top.
  const double bx = left + nc * cell_w + 20;
  for (int k = 0; k < 10; ++k) {
    out << "<rect x=\"" << fx(bx) << "\" y=\"" << fx(top + (9 - k) * 14.0) << "\" width=\"14\" height=\"14\" fill=\""
        << ramp((k + 0.5) / 10.0) << "\"/>\n";
  }
  text(out, bx + 18, top + 10, label(r.hi));
  text(out, bx + 18, top + 140, label(r.lo));
  out << "<rect x=\"" << fx(bx) << "\" y=\"" << fx(top + 150) << "\" width=\"14\" height=\"14\" fill=\"url(#hatch)\"/>\n";
  text(out, bx + 18, top + 161, "failed / undefined");
  out << "</svg>\n";
  return out.str();
}

std::string curves_csv(const CurveSet& c) {
  std::ostringstream out;
  out << c.x_label;
  for (const auto& n : c.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    out << io::format_double(c.x[i]);
    for (const auto& y : c.ys) out << ',' << io::format_double(y[i]);
    out << '\n';
  }
  return out.str();
}

CurveSet parse_curves_csv(std::string_view text) {
  const auto t = io::parse_csv(text);
  CurveSet c;
  c.x_label = t.header.front();
  c.names.assign(t.header.begin() + 1, t.header.end());
  c.ys.resize(c.names.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    try {
      c.x.push_back(io::parse_double(t.rows[i][0]));
      for (std::size_t s = 0; s < c.names.size(); ++s) c.ys[s].push_back(io::parse_double(t.rows[i][s + 1]));
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(t.line_numbers[i], e.what());
    }
  }
  return c;
}

std::string curves_svg(const CurveSet& c, std::string_view title, std::string_view y_label) {
  const double width = 680, height = 340;
  std::ostringstream out;
  svg_open(out, width, height);
  text(out, 70, 18, title, "start", "font-size=\"12\"");
  plot_lines(out, 70, 34, 460, 260, c.x, c.ys, y_label, c.x_label);
  legend(out, 546, 44, c.names);
  out << "</svg>\n";
  return out.str();
}

std::string panels_csv(std::span<const PanelSeries> series, std::string_view value_name) {
  std::ostringstream out;
  out << "channel,unit,lead_hours," << value_name << '\n';
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.leads.size(); ++i) {
      out << s.channel << ',' << s.unit << ',' << s.leads[i] << ',' << io::format_double(s.values[i]) << '\n';
    }
  }
  return out.str();
}

std::vector<PanelSeries> parse_panels_csv(std::string_view text) {
  const auto t = io::parse_csv(text);
  if (t.header.size() != 4) throw JoinError(1, "panel CSV needs channel,unit,lead_hours,value");
  const auto c_ch = t.column("channel");
  const auto c_unit = t.column("unit");
  const auto c_lead = t.column("lead_hours");
  std::vector<PanelSeries> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    try {
      auto it = std::ranges::find(out, row[c_ch], &PanelSeries::channel);
      if (it == out.end()) {
        out.push_back({row[c_ch], row[c_unit], {}, {}});
        it = out.end() - 1;
      }
      it->leads.push_back(static_cast<int>(io::parse_int(row[c_lead])));
      it->values.push_back(io::parse_double(row[3]));
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(t.line_numbers[i], e.what());
    }
  }
  return out;
}

std::string panels_svg(std::span<const PanelSeries> series, std::string_view title,
                       std::string_view y_label) {
  std::vector<std::string> units;
  for (const auto& s : series) {
    if (std::ranges::find(units, s.unit) == units.end()) units.push_back(s.unit);
  }
  const double panel_h = 220;
  const double width = 680;
  const double height = 30 + panel_h * static_cast<double>(std::max<std::size_t>(units.size(), 1));
  std::ostringstream out;
  svg_open(out, width, height);
  text(out, 70, 18, title, "start", "font-size=\"12\"");
  for (std::size_t u = 0; u < units.size(); ++u) {
    const double y0 = 30 + panel_h * static_cast<double>(u);
    // Union of leads in this panel gives the shared x axis.
    std::vector<int> leads;
    std::vector<const PanelSeries*> members;
    for (const auto& s : series) {
      if (s.unit != units[u]) continue;
      members.push_back(&s);
      leads.insert(leads.end(), s.leads.begin(), s.leads.end());
    }
    std::ranges::sort(leads);
    leads.erase(std::unique(leads.begin(), leads.end()), leads.end());
    std::vector<double> x(leads.begin(), leads.end());
    std::vector<std::vector<double>> ys;
    std::vector<std::string> names;
    for (const auto* m : members) {
      std::vector<double> y(x.size(), kNaN);
      for (std::size_t i = 0; i < m->leads.size(); ++i) {
        const auto pos = std::ranges::lower_bound(leads, m->leads[i]) - leads.begin();
        y[static_cast<std::size_t>(pos)] = m->values[i];
      }
      ys.push_back(std::move(y));
      names.push_back(m->channel);
    }
    text(out, 70, y0 + 14, "unit: " + units[u], "start", "font-weight=\"bold\"");
    plot_lines(out, 70, y0 + 22, 460, panel_h - 62, x, ys, y_label, "lead (h)");
    legend(out, 546, y0 + 34, names);
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<BoxStats> box_stats(std::span<const MetricRecord> records, int lead_hours) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : records) {
    if (r.lead_hours != lead_hours) continue;
    if (!values.contains(r.channel)) order.push_back(r.channel);
    values[r.channel].push_back(r.rmse);
  }
  if (order.empty()) {
    throw Error(ErrorCode::kMissingData, "no records at lead " + std::to_string(lead_hours) + " h");
  }
  std::vector<BoxStats> out;
  for (const auto& ch : order) {
    auto v = values[ch];
    std::ranges::sort(v);
    out.push_back({ch, v.front(), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), v.back(), v.size()});
  }
  return out;
}

std::string box_csv(std::span<const BoxStats> boxes) {
  std::ostringstream out;
  out << "channel,min,q1,median,q3,max,n\n";
  for (const auto& b : boxes) {
    out << b.channel << ',' << io::format_double(b.min) << ',' << io::format_double(b.q1) << ','
        << io::format_double(b.median) << ',' << io::format_double(b.q3) << ','
        << io::format_double(b.max) << ',' << b.n << '\n';
  }
  return out.str();
}

std::vector<BoxStats> parse_box_csv(std::string_view text) {
  const auto t = io::parse_csv(text);
  std::vector<BoxStats> out;
  const std::array<std::size_t, 7> col = {t.column("channel"), t.column("min"), t.column("q1"),
                                          t.column("median"), t.column("q3"), t.column("max"),
                                          t.column("n")};
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    try {
      out.push_back({r[col[0]], io::parse_double(r[col[1]]), io::parse_double(r[col[2]]),
                     io::parse_double(r[col[3]]), io::parse_double(r[col[4]]),
                     io::parse_double(r[col[5]]), static_cast<std::size_t>(io::parse_int(r[col[6]]))});
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(t.line_numbers[i], e.what());
    }
  }
  return out;
}

std::string box_svg(std::span<const BoxStats> boxes, std::string_view title) {
  const double slot = 40, left = 70, top = 34, plot_h = 260;
  const double width = left + slot * static_cast<double>(boxes.size()) + 30;
  const double height = top + plot_h + 90;
  std::vector<double> all;
  for (const auto& b : boxes) {
    all.push_back(b.min);
    all.push_back(b.max);
  }
  const Range r = finite_range(all);
  auto py = [&](double v) { return top + plot_h - (v - r.lo) / (r.hi - r.lo) * plot_h; };
  std::ostringstream out;
  svg_open(out, width, height);
  text(out, left, 18, title, "start", "font-size=\"12\"");
  out << "<rect x=\"" << fx(left) << "\" y=\"" << fx(top) << "\" width=\"" << fx(slot * static_cast<double>(boxes.size()))
      << "\" height=\"" << fx(plot_h) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = r.lo + (r.hi - r.lo) * k / 4.0;
    text(out, left - 4, py(v) + 3, label(v), "end");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    out << "<line x1=\"" << fx(cx) << "\" y1=\"" << fx(py(b.min)) << "\" x2=\"" << fx(cx) << "\" y2=\""
        << fx(py(b.max)) << "\" stroke=\"#333333\"/>\n";
    out << "<rect x=\"" << fx(cx - 12) << "\" y=\"" << fx(py(b.q3)) << "\" width=\"24\" height=\""
        << fx(py(b.q1) - py(b.q3)) << "\" fill=\"" << ramp(0.6) << "\" stroke=\"#333333\"/>\n";
    out << "<line x1=\"" << fx(cx - 12) << "\" y1=\"" << fx(py(b.median)) << "\" x2=\"" << fx(cx + 12)
        << "\" y2=\"" << fx(py(b.median)) << "\" stroke=\"#000000\" stroke-width=\"2\"/>\n";
    text(out, cx, top + plot_h + 8, b.channel, "start",
         "transform=\"rotate(60 " + fx(cx) + ' ' + fx(top + plot_h + 8) + ")\"");
  }
  out << "</svg>\n";
  return out.str();
}

std::string unit_for_channel(std::string_view channel) {
  if (channel == kPooledChannel) return "normalized";
  if (auto u = canonical_unit(channel)) return *u;
  return "unknown";
}

std::vector<PanelSeries> derive_error_growth(std::span<const MetricRecord> records,
                                             std::size_t smooth_window) {
  const auto means = reduce_over_ics(records);
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (std::ranges::find(order, r.channel) == order.end()) order.push_back(r.channel);
  }
  std::vector<PanelSeries> out;
  for (const auto& ch : order) {
    std::vector<int> leads;
    std::vector<double> rmse;
    for (const auto& m : means) {
      if (m.channel != ch) continue;
      leads.push_back(m.lead_hours);
      rmse.push_back(m.mean_rmse);
    }
    if (smooth_window > 1) rmse = moving_average(rmse, smooth_window);
    const auto curve = error_growth(leads, rmse, ch);
    out.push_back({ch, unit_for_channel(ch), curve.lead_hours, curve.d_rmse_dt});
  }
  return out;
}

std::string_view to_string(FigureKind k) {
  switch (k) {
    case FigureKind::kHeatmapUnit: return "heatmap-unit";
    case FigureKind::kHeatmap: return "heatmap";
    case FigureKind::kCurves: return "curves";
    case FigureKind::kPanels: return "panels";
    case FigureKind::kBox: return "box";
  }
  return "curves";
}

FigureKind figure_kind_from_string(std::string_view s) {
  for (auto k : {FigureKind::kHeatmapUnit, FigureKind::kHeatmap, FigureKind::kCurves,
                 FigureKind::kPanels, FigureKind::kBox}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown figure kind '" + std::string(s) + "'");
}

std::string render_figure(FigureKind kind, std::string_view csv_text, std::string_view title,
                          std::string_view y_label) {
  switch (kind) {
    case FigureKind::kHeatmapUnit: return heatmap_svg(parse_heatmap_csv(csv_text), title, true);
    case FigureKind::kHeatmap: return heatmap_svg(parse_heatmap_csv(csv_text), title, false);
    case FigureKind::kCurves: return curves_svg(parse_curves_csv(csv_text), title, y_label);
    case FigureKind::kPanels: return panels_svg(parse_panels_csv(csv_text), title, y_label);
    case FigureKind::kBox: return box_svg(parse_box_csv(csv_text), title);
  }
  return {};
}

Bundle::Bundle(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

void Bundle::add_input(const std::filesystem::path& path) {
  inputs_[path.filename().string()] = io::crc32_hex(io::crc32(io::read_bytes(path)));
}

void Bundle::write(const std::string& name, std::string_view text) {
  io::write_atomic(dir_ / name, text);
  outputs_[name] = io::crc32_hex(io::crc32(text));
}

void Bundle::figure(const std::string& stem, FigureKind kind, const std::string& csv,
                    const std::string& title, const std::string& y_label) {
  write(stem + ".csv", csv);
  write(stem + ".svg", render_figure(kind, csv, title, y_label));
  figures_.push_back({{"svg", stem + ".svg"},
                      {"csv", stem + ".csv"},
                      {"kind", std::string(to_string(kind))},
                      {"title", title},
                      {"y_label", y_label}});
}

void Bundle::note(const std::string& key, nlohmann::ordered_json value) { notes_[key] = std::move(value); }

void Bundle::finish(const std::string& command) {
  nlohmann::ordered_json m;
  m["format"] = "wxscale-bundle-manifest";
  m["version"] = 1;
  m["tool"] = "wxscale";
  m["tool_version"] = std::string(kToolVersion);
  m["command"] = command;
  m["inputs"] = inputs_;
  m["outputs"] = outputs_;
  m["figures"] = figures_;
  m["notes"] = notes_;
  io::write_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
}

}  // namespace wxscale::report
