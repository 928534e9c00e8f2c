#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"
#include "wxscale/report.hpp"

using namespace wxscale;
using namespace wxscale::report;

namespace {

Heatmap small_heatmap() {
  return {{6, 12, 18}, {"z500", "t850"}, {1.0, 0.5, 0.0, std::nan(""), 0.25, 0.75}};
}

// Compares against tests/golden/<name>; WXSCALE_UPDATE_GOLDEN=1 rewrites it.
void check_golden(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::path(WXSCALE_GOLDEN_DIR) / name;
  if (std::getenv("WXSCALE_UPDATE_GOLDEN") != nullptr) io::write_atomic(path, text);
  REQUIRE(std::filesystem::exists(path));
  CHECK(io::read_text(path) == text);
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("heatmap csv round trip keeps NaN") {
  const auto h = small_heatmap();
  const auto csv = heatmap_csv(h);
  CHECK(csv.rfind("lead_hours,z500,t850\n6,1,0.5\n", 0) == 0);
  CHECK(csv.find("nan") != std::string::npos);
  const auto back = parse_heatmap_csv(csv);
  CHECK(back.leads == h.leads);
  CHECK(back.channels == h.channels);
  CHECK(std::isnan(back.at(1, 1)));
  CHECK(back.at(2, 1) == 0.75);
  CHECK(heatmap_csv(back) == csv);
}

TEST_CASE("heatmap colour map and hatching") {
  const auto svg = heatmap_svg(small_heatmap(), "r2", true);
  CHECK(svg.find("fill=\"#f46d43\"") != std::string::npos);  // r2 = 1
  CHECK(svg.find("fill=\"#3c3c3c\"") != std::string::npos);  // r2 = 0
  CHECK(svg.find("fill=\"url(#hatch)\" stroke") != std::string::npos);
  CHECK(svg.find("viewBox=\"0 0 ") != std::string::npos);
  CHECK(svg.find("failed / undefined") != std::string::npos);
  CHECK(svg == heatmap_svg(parse_heatmap_csv(heatmap_csv(small_heatmap())), "r2", true));
  check_golden("heatmap_small.svg", svg);
}

TEST_CASE("heatmap titles are escaped") {
  const auto svg = heatmap_svg(small_heatmap(), "a < b & c", false);
  CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
}

TEST_CASE("curves round trip") {
  CurveSet c{"lead_hours", {6, 12, 18}, {"params", "compute"}, {{-0.3, -0.2, std::nan("")}, {-0.25, -0.2, -0.1}}};
  const auto csv = curves_csv(c);
  const auto back = parse_curves_csv(csv);
  CHECK(back.names == c.names);
  CHECK(back.x == c.x);
  CHECK(std::isnan(back.ys[0][2]));
  CHECK(curves_svg(back, "slope", "b") == curves_svg(c, "slope", "b"));
  check_golden("curves_small.svg", curves_svg(c, "slope", "b"));
}

TEST_CASE("panels group by unit") {
  std::vector<PanelSeries> s{{"z500", "m²/s²", {6, 12}, {1, 2}}, {"t850", "K", {6, 12}, {0.1, 0.2}},
                             {"t2m", "K", {6, 12}, {0.3, 0.1}}};
  const auto csv = panels_csv(s, "d_rmse_dt");
  CHECK(csv.rfind("channel,unit,lead_hours,d_rmse_dt\n", 0) == 0);
  const auto back = parse_panels_csv(csv);
  REQUIRE(back.size() == 3);
  CHECK(back[1].unit == "K");
  CHECK(back[2].values == s[2].values);
  const auto svg = panels_svg(back, "growth", "per h");
  CHECK(svg == panels_svg(s, "growth", "per h"));
  CHECK(svg.find(">unit: K<") != std::string::npos);
}

TEST_CASE("box statistics use linear quantiles") {
  std::vector<MetricRecord> recs;
  const double v[] = {4, 1, 3, 2, 10};
  for (int i = 0; i < 5; ++i) recs.push_back({"r", i * 12, 6, "z500", v[i]});
  recs.push_back({"r", 0, 12, "z500", 100});
  const auto b = box_stats(recs, 6);
  REQUIRE(b.size() == 1);
  CHECK(b[0].n == 5);
  CHECK(b[0].min == 1);
  CHECK(b[0].q1 == 2);
  CHECK(b[0].median == 3);
  CHECK(b[0].q3 == 4);
  CHECK(b[0].max == 10);
  const auto back = parse_box_csv(box_csv(b));
  CHECK(back[0].q3 == 4);
  CHECK(box_svg(back, "x") == box_svg(b, "x"));
  try {
    box_stats(recs, 18);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingData);
  }
}

TEST_CASE("derived error growth") {
  std::vector<MetricRecord> recs;
  for (int ic : {0, 12})
    for (int lead = 6; lead <= 48; lead += 6) recs.push_back({"r", ic, lead, "t850", 0.5 * lead + ic});
  const auto g = derive_error_growth(recs, 1);
  REQUIRE(g.size() == 1);
  CHECK(g[0].unit == "K");
  for (double d : g[0].values) CHECK(std::abs(d - 0.5) < 1e-12);
  const auto s = derive_error_growth(recs, 3);
  CHECK(std::abs(s[0].values[3] - 0.5) < 1e-12);
  CHECK(unit_for_channel("__pooled__") == "normalized");
  CHECK(unit_for_channel("foo") == "unknown");
}

TEST_CASE("malformed csv reports the row") {
  try {
    parse_heatmap_csv("lead_hours,z500\n6,0.1\n12,abc\n");
    FAIL("expected a join error");
  } catch (const JoinError& e) {
    CHECK(e.row() == 3);
  }
  CHECK_THROWS_AS(parse_heatmap_csv("lead,z500\n"), JoinError);
  CHECK_THROWS_AS(figure_kind_from_string("pie"), Error);
}

TEST_CASE("bundle manifest pairs figures with csv") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "input.csv", std::string("x\n1\n"));
  {
    Bundle b(dir / "out");
    b.add_input(dir / "input.csv");
    b.figure("heat", FigureKind::kHeatmapUnit, heatmap_csv(small_heatmap()), "r2");
    b.note("kappa", 6.0);
    b.finish("fit");
  }
  const auto m = nlohmann::json::parse(io::read_text(dir / "out/manifest.json"));
  CHECK(m["command"] == "fit");
  CHECK(m["inputs"]["input.csv"] == io::crc32_hex(io::crc32(std::string_view("x\n1\n"))));
  CHECK(m["outputs"].contains("heat.svg"));
  for (const auto& f : m["figures"]) {
    const auto csv = io::read_text(dir / "out" / f["csv"].get<std::string>());
    const auto svg = io::read_text(dir / "out" / f["svg"].get<std::string>());
    CHECK(render_figure(figure_kind_from_string(f["kind"].get<std::string>()), csv,
                        f["title"].get<std::string>(), f["y_label"].get<std::string>()) == svg);
    CHECK(m["outputs"][f["svg"].get<std::string>()] == io::crc32_hex(io::crc32(svg)));
  }
}

}  // TEST_SUITE
