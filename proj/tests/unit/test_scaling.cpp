#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/scaling.hpp"

using namespace wxscale;

namespace {

std::string reason_of(auto&& fn) {
  try {
    fn();
  } catch (const FitError& e) {
    return e.reason();
  }
  return "none";
}

std::vector<double> exps(std::initializer_list<double> xs) {
  std::vector<double> v;
  for (double x : xs) v.push_back(std::exp(x));
  return v;
}

// Simple OLS by Cramer's rule on the 2x2 normal equations.
struct Ols {
  double a, b, r2;
};
Ols cramer(const std::vector<double>& x, const std::vector<double>& y) {
  double n = x.size(), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  const double a = (sy * sxx - sx * sxy) / det;
  const double b = (n * sxy - sx * sy) / det;
  double ssr = 0, sst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ssr += std::pow(y[i] - a - b * x[i], 2);
    sst += std::pow(y[i] - sy / n, 2);
  }
  return {a, b, 1 - ssr / sst};
}

}  // namespace

TEST_SUITE("scaling") {

TEST_CASE("quadratic least squares") {
  const std::vector<double> x{-1, 0, 1, 2, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(0.5 * v * v - 3 * v + 2);
  const auto q = fit_quadratic(x, y);
  CHECK(q.q == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(q.r == doctest::Approx(-3).epsilon(1e-12));
  CHECK(q.s == doctest::Approx(2).epsilon(1e-12));
}

TEST_CASE("symmetric triple") {
  const auto o = fit_isoflop_optimum(exps({1, 2, 3}), exps({2, 1, 2}), 1e12);
  CHECK(std::log(o.n_star) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::log(o.eps_star) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(o.d_star == doctest::Approx(1e12 / (6.0 * o.n_star)).epsilon(1e-14));
  CHECK(o.curvature == doctest::Approx(1.0));
  CHECK_FALSE(o.extrapolated);
}

TEST_CASE("exact parabola sampled off the vertex") {
  const std::vector<double> xs{0, 1, 3, 4};
  std::vector<double> n, e;
  for (double x : xs) {
    n.push_back(std::exp(x));
    e.push_back(std::exp((x - 2) * (x - 2) + 1));
  }
  const auto o = fit_isoflop_optimum(n, e, 1.0, 2.0);
  CHECK(std::abs(std::log(o.n_star) - 2) < 1e-10);
  CHECK(std::abs(std::log(o.eps_star) - 1) < 1e-10);
  CHECK(o.d_star == doctest::Approx(1.0 / (2.0 * o.n_star)));
}

TEST_CASE("vertex is order invariant") {
  const std::vector<double> n{10, 30, 100, 300, 1000};
  const std::vector<double> e{5.0, 3.1, 2.7, 2.9, 4.2};
  const std::vector<double> n2{300, 10, 1000, 100, 30};
  const std::vector<double> e2{2.9, 5.0, 4.2, 2.7, 3.1};
  const auto a = fit_isoflop_optimum(n, e, 1e6);
  const auto b = fit_isoflop_optimum(n2, e2, 1e6);
  CHECK(std::abs(a.n_star / b.n_star - 1) < 1e-10);
  CHECK(std::abs(a.eps_star / b.eps_star - 1) < 1e-10);
}

TEST_CASE("stage one failures") {
  CHECK(reason_of([] { fit_isoflop_optimum(exps({1, 2, 3}), exps({1, 2, 3}), 1); }) == "non_convex");
  CHECK(reason_of([] { fit_isoflop_optimum(exps({1, 2, 3}), exps({0, 1, 0}), 1); }) == "non_convex");
  CHECK(reason_of([] { fit_isoflop_optimum(exps({1, 2}), exps({2, 1}), 1); }) == "insufficient_runs");
  CHECK(reason_of([] { fit_isoflop_optimum(exps({1, 1, 2, 2}), exps({2, 2, 1, 1}), 1); }) == "insufficient_runs");
  try {
    fit_isoflop_optimum(exps({1, 2, 3}), exps({1, 2, 3}), 1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFitFailure);
  }
}

TEST_CASE("vertex outside the sweep is flagged, not clamped") {
  std::vector<double> n, e;
  for (double x : {0.0, 1.0, 2.0, 3.0}) {
    n.push_back(std::exp(x));
    e.push_back(std::exp(0.1 * (x - 5) * (x - 5)));
  }
  const auto o = fit_isoflop_optimum(n, e, 1);
  CHECK(o.extrapolated);
  CHECK(std::log(o.n_star) == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("exact power law") {
  const std::vector<double> s{10, 100, 1000};
  std::vector<double> e;
  for (double v : s) e.push_back(std::exp(3.0) * std::pow(v, -0.5));
  const auto f = fit_power_law(s, e);
  CHECK(std::abs(f.intercept - 3.0) < 1e-10);
  CHECK(std::abs(f.slope + 0.5) < 1e-10);
  CHECK(std::abs(f.r2 - 1.0) < 1e-10);
  CHECK(f.n_points == 3);
  CHECK(f.flags.empty());
}

TEST_CASE("flat errors give a degenerate r2") {
  const std::vector<double> s{1, std::exp(1.0), std::exp(2.0)};
  const std::vector<double> e(3, std::exp(1.0));
  const auto f = fit_power_law(s, e);
  CHECK(f.slope == 0.0);
  CHECK(std::isnan(f.r2));
  CHECK(f.has_flag("degenerate_r2"));
}

TEST_CASE("hand dataset") {
  const std::vector<double> s{1, 10, 100};
  const std::vector<double> e{1, 2, 8};
  const auto f = fit_power_law(s, e);
  // worked by hand: b = 1.5 ln2 / ln10, a = -ln2 / 6, r2 = 27/28
  CHECK(f.slope == doctest::Approx(0.4515449934959717).epsilon(1e-13));
  CHECK(f.intercept == doctest::Approx(-0.11552453009332421).epsilon(1e-13));
  CHECK(f.r2 == doctest::Approx(27.0 / 28.0).epsilon(1e-13));
  const auto o = cramer({0, std::log(10.0), std::log(100.0)}, {0, std::log(2.0), std::log(8.0)});
  CHECK(f.slope == doctest::Approx(o.b).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(o.r2).epsilon(1e-12));
}

TEST_CASE("random data against Cramer's rule") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> s, e, x, y;
    for (int i = 0; i < 3 + trial % 6; ++i) {
      s.push_back(std::pow(10.0, u(rng) * 4));
      e.push_back(u(rng));
      x.push_back(std::log(s.back()));
      y.push_back(std::log(e.back()));
    }
    const auto f = fit_power_law(s, e);
    const auto o = cramer(x, y);
    CHECK(std::abs(f.slope - o.b) <= 1e-9 * std::max(1.0, std::abs(o.b)));
    CHECK(std::abs(f.intercept - o.a) <= 1e-9 * std::max(1.0, std::abs(o.a)));
    CHECK(std::abs(f.r2 - o.r2) <= 1e-9);
    CHECK(f.r2 <= 1.0);
  }
}

TEST_CASE("scale invariance") {
  const std::vector<double> s{3, 40, 500, 7000};
  const std::vector<double> e{2.0, 1.1, 0.7, 0.52};
  const auto base = fit_power_law(s, e);
  std::vector<double> e2, s2;
  for (double v : e) e2.push_back(v * 37.0);
  for (double v : s) s2.push_back(v * 1e-3);
  const auto scaled_e = fit_power_law(s, e2);
  const auto scaled_s = fit_power_law(s2, e);
  CHECK(std::abs(scaled_e.slope - base.slope) < 1e-10);
  CHECK(std::abs(scaled_e.r2 - base.r2) < 1e-10);
  CHECK(std::abs(scaled_e.intercept - base.intercept - std::log(37.0)) < 1e-10);
  CHECK(std::abs(scaled_s.slope - base.slope) < 1e-10);
  CHECK(std::abs(scaled_s.r2 - base.r2) < 1e-10);
}

TEST_CASE("power law failures") {
  const std::vector<double> s{5, 5, 5};
  const std::vector<double> e{1, 2, 3};
  CHECK(reason_of([&] { fit_power_law(s, e); }) == "zero_covariate_variance");
  const std::vector<double> two{1, 2};
  CHECK(reason_of([&] { fit_power_law(two, two); }) == "insufficient_budgets");
  const std::vector<double> neg{-1, 2, 3};
  CHECK_THROWS_AS(fit_power_law(neg, e), Error);
}

TEST_CASE("allocation exponents") {
  std::vector<IsoflopOptimum> opt;
  for (double c : {1e10, 1e11, 1e12, 1e13}) {
    IsoflopOptimum o;
    o.c_flops = c;
    o.n_star = 3.0 * std::pow(c, 0.7);
    o.d_star = c / (6.0 * o.n_star);
    opt.push_back(o);
  }
  const auto a = fit_allocation(opt);
  CHECK(std::abs(a.alpha - 0.7) < 1e-10);
  CHECK(std::abs(a.beta - 0.3) < 1e-10);
  CHECK(std::abs(a.alpha_plus_beta - 1.0) < 1e-10);
  CHECK(a.consistent);
  CHECK(a.n_budgets == 4);
  opt.resize(2);
  CHECK(reason_of([&] { fit_allocation(opt); }) == "insufficient_budgets");
}

TEST_CASE("runs table") {
  const std::vector<RunPoint> runs{{"a", 10, 100, 6000, "b0"}, {"b", 20, 50, 6000, "b0"}};
  CHECK_NOTHROW(validate_runs(runs));
  CHECK(parse_runs_csv(runs_csv(runs)) == runs);
  const std::vector<RunPoint> off{{"a", 10, 100, 6000, "b0"}, {"b", 20, 50, 6100, "b0"}};
  CHECK_THROWS_AS(validate_runs(off), Error);
  const std::vector<RunPoint> dup{{"a", 10, 100, 6000, "b0"}, {"a", 20, 50, 6000, "b0"}};
  CHECK_THROWS_AS(validate_runs(dup), Error);
  try {
    parse_runs_csv("run_id,n_params,d_samples,c_flops,budget_id\na,1,2,3,b\nb,x,2,3,b\n");
    FAIL("expected a join error");
  } catch (const JoinError& e) {
    CHECK(e.row() == 3);
  }
  try {
    parse_runs_csv("run_id,n_params,c_flops,budget_id\n");
    FAIL("expected a join error");
  } catch (const JoinError& e) {
    CHECK(e.row() == 1);
  }
}

TEST_CASE("covariate names") {
  CHECK(parse_covariates("params,compute") == std::vector<Covariate>{Covariate::kParams, Covariate::kCompute});
  CHECK_THROWS_AS(parse_covariates("flops"), Error);
  CHECK_THROWS_AS(parse_covariates("data,data"), Error);
  CHECK(to_string(Covariate::kData) == "data");
}

TEST_CASE("sweep of a single cell is the two-stage composition") {
  std::vector<RunPoint> runs;
  std::vector<MetricRecord> recs;
  std::vector<IsoflopOptimum> manual;
  int k = 0;
  for (double c : {1e9, 1e10, 1e11, 1e12}) {
    std::vector<double> n, e;
    for (double x : {-1.0, -0.4, 0.0, 0.5, 1.0}) {
      const double nn = std::pow(c, 0.5) * std::exp(x) / 10;
      const double ee = 3 * std::pow(c, -0.1) * std::exp(0.3 * (x - 0.1) * (x - 0.1));
      const std::string id = "r" + std::to_string(k++);
      runs.push_back({id, nn, c / (6 * nn), c, "c" + std::to_string(static_cast<int>(std::log10(c)))});
      // two ICs averaging to ee
      recs.push_back({id, 0, 6, "z500", ee * 0.9});
      recs.push_back({id, 12, 6, "z500", ee * 1.1});
      n.push_back(nn);
      e.push_back(ee);
    }
    manual.push_back(fit_isoflop_optimum(n, e, c));
  }
  const auto res = sweep(runs, recs);
  REQUIRE(res.cells.size() == 1);
  const auto& cell = res.cells[0];
  CHECK(cell.status == "ok");
  REQUIRE(cell.optima.size() == 4);
  std::vector<double> c, eps;
  for (const auto& o : manual) {
    c.push_back(o.c_flops);
    eps.push_back(o.eps_star);
  }
  const auto want = fit_power_law(c, eps);
  const auto* got = cell.fit(Covariate::kCompute);
  REQUIRE(got != nullptr);
  CHECK(got->slope == doctest::Approx(want.slope).epsilon(1e-12));
  CHECK(got->r2 == doctest::Approx(want.r2).epsilon(1e-12));
  CHECK(got->slope < 0);
  CHECK(cell.optima[0].n_star == doctest::Approx(manual[0].n_star).epsilon(1e-12));

  const auto j = fit_report_json(res);
  CHECK(j["schema_version"] == 1);
  CHECK(j["fits"]["compute"]["6"]["z500"]["status"] == "ok");
  CHECK(j["fits"]["params"]["6"]["z500"]["n_points"] == 4);
  CHECK(j["stage1"]["6"]["z500"].size() == 4);
}

TEST_CASE("sweep join and failure codes") {
  std::vector<RunPoint> runs{{"a", 1, 1, 6, "b"}, {"b", 2, 0.5, 6, "b"}, {"c", 3, 1.0 / 3, 6, "b"}};
  std::vector<MetricRecord> recs{{"a", 0, 6, "z500", 2}, {"b", 0, 6, "z500", 1}, {"zz", 0, 6, "z500", 1}};
  try {
    sweep(runs, recs);
    FAIL("expected a join error");
  } catch (const JoinError& e) {
    CHECK(e.row() == 4);
    CHECK(e.code() == ErrorCode::kJoin);
  }
  recs.pop_back();
  recs.push_back({"c", 0, 6, "z500", 2});
  // one convex budget only
  const auto res = sweep(runs, recs);
  CHECK(res.cells[0].status == "insufficient_budgets");
  CHECK(res.cells[0].fits.empty());
  CHECK(fit_report_json(res)["fits"]["data"]["6"]["z500"]["b"].is_null());

  recs[1].rmse = 3;  // concave
  const auto bad = sweep(runs, recs);
  CHECK(bad.cells[0].status == "non_convex");
  CHECK(fit_report_json(bad)["fits"]["compute"]["6"]["z500"]["status"] == "non_convex");
}

}  // TEST_SUITE
