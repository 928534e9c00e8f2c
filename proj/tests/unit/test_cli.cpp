#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wxscale/cli.hpp"
#include "wxscale/io.hpp"
#include "wxscale/report.hpp"

using namespace wxscale;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string s(const fs::path& p) { return p.string(); }

constexpr const char* kSynthConfig = R"(seed = 7
[synth]
budgets = [1e12, 1e13, 1e14]
n_per_budget = 5
leads = [6, 12, 18, 24]
channels = ["z500", "t850"]
[synth.surface]
kappa = 6.0
noise_sigma = 0.01
[synth.truth]
kind = "advecting"
n_lat = 8
n_lon = 16
states = 12
channels = ["z500", "t850", "t2m"]
)";

constexpr const char* kTinyModel =
    R"({"kind": "swin", "patch": [2, 2], "embed_dim": 8, "depth": 2, "heads": 2, "window": [2, 2], "seed": 42})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"--no-such-flag"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"fit", "--kappa", "abc"}).code == 2);
}

TEST_CASE("synth is byte deterministic") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "c.toml", std::string(kSynthConfig));
  const auto a = cli({"--config", s(dir / "c.toml"), "--out", s(dir / "a"), "synth"});
  const auto b = cli({"--config", s(dir / "c.toml"), "--out", s(dir / "b"), "synth"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  for (const char* f : {"runs.csv", "metrics.csv", "synth_manifest.json", "manifest.json", "truth/index.json"}) {
    CHECK(io::read_text(dir / "a" / f) == io::read_text(dir / "b" / f));
  }
  CHECK(a.err.find("kappa") == std::string::npos);

  // a different seed changes the noisy losses
  const auto c = cli({"--config", s(dir / "c.toml"), "--seed", "8", "--out", s(dir / "c"), "synth"});
  REQUIRE(c.code == 0);
  CHECK(io::read_text(dir / "a/metrics.csv") != io::read_text(dir / "c/metrics.csv"));
}

TEST_CASE("missing kappa is announced") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "c.toml", std::string("[synth]\nbudgets = [1e12, 1e13, 1e14]\nleads = [6]\n"));
  const auto r = cli({"--config", s(dir / "c.toml"), "--out", s(dir / "o"), "synth"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("notice") != std::string::npos);
  CHECK(r.err.find("kappa") != std::string::npos);
  const auto m = nlohmann::json::parse(io::read_text(dir / "o/synth_manifest.json"));
  CHECK(m["kappa_source"] == "default");
}

TEST_CASE("existing output needs --force") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "c.toml", std::string("[synth]\nbudgets = [1e12, 1e13, 1e14]\nleads = [6]\n"));
  REQUIRE(cli({"--config", s(dir / "c.toml"), "--out", s(dir / "o"), "synth"}).code == 0);
  const auto again = cli({"--config", s(dir / "c.toml"), "--out", s(dir / "o"), "synth"});
  CHECK(again.code == 13);
  CHECK(again.err.find("--force") != std::string::npos);
  CHECK(cli({"--config", s(dir / "c.toml"), "--out", s(dir / "o"), "--force", "synth"}).code == 0);
}

TEST_CASE("error exit codes") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "bad.toml", std::string("[synth]\nbudgetz = [1]\n"));
  const auto bad = cli({"--config", s(dir / "bad.toml"), "--out", s(dir / "o"), "synth"});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("budgetz") != std::string::npos);

  io::write_atomic(dir / "broken.toml", std::string("[synth\n"));
  CHECK(cli({"--config", s(dir / "broken.toml"), "--out", s(dir / "o2"), "synth"}).code == 3);
  CHECK(cli({"--config", s(dir / "none.toml"), "--out", s(dir / "o3"), "synth"}).code == 4);

  io::write_atomic(dir / "m.json", std::string(kTinyModel));
  const auto nt = cli({"--out", s(dir / "o4"), "rollout", "--truth", s(dir / "nowhere"), "--model", s(dir / "m.json")});
  CHECK((nt.code == 4 || nt.code == 8));

  CHECK(cli({"--out", s(dir / "o5"), "fit", "--runs", s(dir / "x.csv"), "--metrics", s(dir / "y.csv")}).code == 4);
  CHECK(cli({"--out", s(dir / "o6"), "fit"}).code == 2);
}

TEST_CASE("rollout with a verified decomposition") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "c.toml", std::string(kSynthConfig));
  io::write_atomic(dir / "m.json", std::string(kTinyModel));
  REQUIRE(cli({"--config", s(dir / "c.toml"), "--out", s(dir / "syn"), "synth"}).code == 0);
  for (const char* strategy : {"roll", "halo"}) {
    const auto out = dir / (std::string("roll_") + strategy);
    const auto r = cli({"--verify", "--layout", "1,2,2", "--out", s(out), "rollout", "--truth", s(dir / "syn/truth"),
                        "--model", s(dir / "m.json"), "--max-lead", "24", "--max-ics", "2", "--shift-strategy",
                        strategy});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = nlohmann::json::parse(io::read_text(out / "rollout_manifest.json"));
    CHECK(m["decomposition"]["max_relative_deviation"].get<double>() < 1e-10);
    CHECK(m["decomposition"]["verified"] == true);
    CHECK(m["decomposition"]["layout"] == "1,2,2,1");
    CHECK(fs::exists(out / "comm_trace.jsonl"));
    CHECK(r.err.find("max relative deviation") != std::string::npos);
    const auto recs = parse_metrics_csv(io::read_text(out / "metrics.csv"));
    CHECK(recs.size() == 2 * 4 * 4);
  }
}

TEST_CASE("fit, derive and report bundles") {
  wxtest::TempDir dir;
  io::write_atomic(dir / "c.toml", std::string(kSynthConfig));
  REQUIRE(cli({"--config", s(dir / "c.toml"), "--out", s(dir / "syn"), "synth"}).code == 0);
  const auto runs = s(dir / "syn/runs.csv");
  const auto metrics = s(dir / "syn/metrics.csv");

  const auto f = cli({"--out", s(dir / "fit"), "fit", "--runs", runs, "--metrics", metrics, "--kappa", "6"});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  CHECK(f.out.find("alpha=") != std::string::npos);
  for (const char* name : {"fit_report.json", "allocation.csv", "heatmap_compute_r2.svg", "heatmap_params_slope.csv",
                           "pooled_r2_vs_lead.svg", "pooled_slope_vs_lead.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / "fit" / name), name);
  }
  const auto nok = cli({"--out", s(dir / "fit2"), "fit", "--runs", runs, "--metrics", metrics});
  CHECK(nok.err.find("kappa") != std::string::npos);

  const auto d = cli({"--out", s(dir / "der"), "derive", "--metrics", metrics, "--smooth", "3"});
  REQUIRE(d.code == 0);
  CHECK(fs::exists(dir / "der/error_growth.svg"));
  CHECK(cli({"--out", s(dir / "der2"), "derive", "--metrics", metrics, "--smooth", "2"}).code == 2);

  const auto r = cli({"--out", s(dir / "rep"), "report", "--runs", runs, "--metrics", metrics, "--kappa", "6"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "rep/rmse_box_6h.svg"));

  // every figure re-renders from its csv
  const auto m = nlohmann::json::parse(io::read_text(dir / "rep/manifest.json"));
  CHECK(m["command"] == "report");
  CHECK(m["figures"].size() >= 6);
  for (const auto& fig : m["figures"]) {
    const auto csv = io::read_text(dir / "rep" / fig["csv"].get<std::string>());
    const auto svg = io::read_text(dir / "rep" / fig["svg"].get<std::string>());
    CHECK(report::render_figure(report::figure_kind_from_string(fig["kind"].get<std::string>()), csv,
                                fig["title"].get<std::string>(), fig["y_label"].get<std::string>()) == svg);
  }

  // rerunning into fresh directories is byte identical
  REQUIRE(cli({"--out", s(dir / "rep_b"), "report", "--runs", runs, "--metrics", metrics, "--kappa", "6"}).code == 0);
  for (const auto& e : fs::directory_iterator(dir / "rep")) {
    CHECK(io::read_text(e.path()) == io::read_text(dir / "rep_b" / e.path().filename()));
  }
}

}  // TEST_SUITE
