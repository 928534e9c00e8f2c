#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wxscale/errors.hpp"
#include "wxscale/synth.hpp"

using namespace wxscale;

namespace {

// Brute-force minimiser of the surface along C = kappa N D on a fine log grid.
double grid_search_n(const SurfaceTerms& t, double kappa, double c) {
  double best_n = 0, best = INFINITY;
  for (int i = 0; i <= 200000; ++i) {
    const double n = std::pow(10.0, 0.0 + 15.0 * i / 200000.0);
    const double d = c / (kappa * n);
    const double l = t.amp_n / std::pow(n, t.exp_n) + t.amp_d / std::pow(d, t.exp_d);
    if (l < best) {
      best = l;
      best_n = n;
    }
  }
  return best_n;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("surface evaluation") {
  CHECK(surface_loss(2.0, {100, 0.5, 200, 0.5}, 100, 400) == doctest::Approx(22.0).epsilon(1e-14));
  CHECK(surface_loss(2.0, {100, 0.5, 200, 0.5}, 1e300, 1e300) == doctest::Approx(2.0));
  SurfaceSpec spec;
  spec.noise_sigma = 0.0;
  std::mt19937_64 r1(1), r2(1);
  CHECK(surface_loss(spec, 1e4, 1e5, r1) == surface_loss(spec, 1e4, 1e5, r2));
  spec.noise_sigma = 0.1;
  std::mt19937_64 r3(5), r4(5);
  const double a = surface_loss(spec, 1e4, 1e5, r3);
  CHECK(a == surface_loss(spec, 1e4, 1e5, r4));
  CHECK(a != surface_loss(spec, 1e4, 1e5));
  CHECK_THROWS_AS(surface_loss(spec, 0.0, 1.0), Error);
}

TEST_CASE("analytic optimum agrees with grid search") {
  const SurfaceTerms cases[] = {{400, 0.5, 400, 0.5}, {100, 0.3, 700, 0.6}, {50, 0.7, 20, 0.4}};
  for (const auto& t : cases) {
    for (double c : {1e12, 1e15}) {
      const double want = grid_search_n(t, 6.0, c);
      const double got = analytic_optimum_n(t, 6.0, c);
      // grid spacing is 15/200000 decades
      CHECK(std::abs(std::log10(got / want)) < 1e-4);
    }
  }
}

TEST_CASE("symmetric surface gives half-half allocation") {
  const SurfaceTerms t{400, 0.5, 400, 0.5};
  const double n12 = analytic_optimum_n(t, 6.0, 1e12);
  const double n15 = analytic_optimum_n(t, 6.0, 1e15);
  CHECK(std::log(n15 / n12) / std::log(1e3) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("run counting") {
  SurfaceSpec spec;
  FamilyOptions opts;
  opts.leads = {6, 12};
  opts.channels = {"z500", "t850"};
  const std::vector<double> budgets{1e12, 1e13, 1e14, 1e15};
  const auto fam = make_isoflop_family(spec, budgets, 3, opts);
  CHECK(fam.runs.size() == 12);
  CHECK(fam.records.size() == 12 * 2 * 3);
  CHECK(fam.runs[4].run_id == "r1_1");
  CHECK(fam.runs[4].budget_id == "b1");
  for (const auto& r : fam.runs) CHECK(6.0 * r.n_params * r.d_samples == doctest::Approx(r.c_flops).epsilon(1e-12));
  CHECK_NOTHROW(validate_runs(fam.runs));
}

TEST_CASE("family validation") {
  SurfaceSpec spec;
  const std::vector<double> down{1e13, 1e12, 1e14};
  CHECK_THROWS_AS(make_isoflop_family(spec, down, 3), Error);
  const std::vector<double> ok{1e12, 1e13, 1e14};
  CHECK_THROWS_AS(make_isoflop_family(spec, ok, 2), Error);
  const std::vector<double> tiny{1.0, 10.0, 100.0};
  try {
    make_isoflop_family(spec, tiny, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
  spec.terms.exp_n = -1;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("zero-noise family is exact downstream") {
  SurfaceSpec spec;
  FamilyOptions opts;
  opts.leads = {6, 120, 240};
  opts.channels = {"z500", "t2m"};
  const std::vector<double> budgets{1e12, 1e13, 1e14, 1e15};
  const auto fam = make_isoflop_family(spec, budgets, 5, opts);
  const auto res = sweep(fam.runs, fam.records);
  for (const auto& cell : res.cells) {
    REQUIRE(cell.status == "ok");
    for (const auto& o : cell.optima) {
      CHECK(std::abs(o.n_star / analytic_optimum_n(spec.terms, 6.0, o.c_flops) - 1) < 1e-6);
    }
    for (const auto& f : cell.fits) CHECK(std::abs(f.r2 - 1.0) < 1e-8);
    CHECK(cell.fit(Covariate::kCompute)->slope < 0);
  }
  // channel-independent surface: identical rows
  CHECK(std::abs(res.at(120, "z500").fit(Covariate::kParams)->slope -
                 res.at(120, "t2m").fit(Covariate::kParams)->slope) < 1e-10);
}

TEST_CASE("horizon modulation flattens slopes toward long leads") {
  HorizonModulation h;
  CHECK(h.exponent(6, 6, 240) == 1.0);
  CHECK(h.exponent(240, 6, 240) == 0.5);
  CHECK(h.factor(240, 6, 240) == 2.0);
  CHECK(h.apply(4.0, 240, 6, 240) == doctest::Approx(4.0));
  CHECK(h.apply(9.0, 6, 6, 6) == 9.0);

  SurfaceSpec spec;
  FamilyOptions opts;
  opts.leads = {6, 123, 240};
  const std::vector<double> budgets{1e12, 1e13, 1e14};
  const auto res = sweep(make_isoflop_family(spec, budgets, 5, opts).runs,
                         make_isoflop_family(spec, budgets, 5, opts).records);
  const double b6 = res.at(6, "z500").fit(Covariate::kCompute)->slope;
  const double b240 = res.at(240, "z500").fit(Covariate::kCompute)->slope;
  CHECK(b6 == doctest::Approx(-0.25).epsilon(1e-8));
  CHECK(b240 == doctest::Approx(-0.125).epsilon(1e-8));
}

TEST_CASE("channel overrides order the recovered params slopes") {
  SurfaceSpec spec;
  spec.per_channel_overrides["t850"] = {400, 0.3, 400, 0.3};
  spec.per_channel_overrides["z500"] = {400, 0.7, 400, 0.7};
  FamilyOptions opts;
  opts.channels = {"z500", "t850"};
  const std::vector<double> budgets{1e12, 1e13, 1e14, 1e15};
  const auto fam = make_isoflop_family(spec, budgets, 7, opts);
  const auto res = sweep(fam.runs, fam.records);
  const double bz = res.at(6, "z500").fit(Covariate::kParams)->slope;
  const double bt = res.at(6, "t850").fit(Covariate::kParams)->slope;
  CHECK(bz < bt);
  CHECK(bz == doctest::Approx(-0.7).epsilon(1e-6));
  CHECK(bt == doctest::Approx(-0.3).epsilon(1e-6));
}

TEST_CASE("generators are deterministic") {
  SurfaceSpec spec;
  spec.noise_sigma = 0.05;
  FamilyOptions opts;
  opts.seed = 99;
  opts.channels = {"z500", "t850"};
  const std::vector<double> budgets{1e12, 1e13, 1e14};
  const auto a = make_isoflop_family(spec, budgets, 4, opts);
  const auto b = make_isoflop_family(spec, budgets, 4, opts);
  CHECK(a.records == b.records);
  CHECK(a.runs == b.runs);
  opts.seed = 100;
  CHECK_FALSE(make_isoflop_family(spec, budgets, 4, opts).records == a.records);
  const auto m = generator_manifest(spec, budgets, 4, opts);
  CHECK(m["seed"] == 100);
  CHECK(m["surface"]["noise_sigma"] == 0.05);
  CHECK(m["analytic_optimum"].size() == 3);
}

TEST_CASE("pooled synthetic error is the channel rms") {
  SurfaceSpec spec;
  spec.per_channel_overrides["t850"] = {300, 0.4, 300, 0.4};
  FamilyOptions opts;
  opts.channels = {"z500", "t850"};
  const std::vector<double> budgets{1e12, 1e13, 1e14};
  const auto fam = make_isoflop_family(spec, budgets, 3, opts);
  for (std::size_t i = 0; i + 2 < fam.records.size(); i += 3) {
    const double z = fam.records[i].rmse, t = fam.records[i + 1].rmse;
    CHECK(fam.records[i + 2].channel == kPooledChannel);
    CHECK(fam.records[i + 2].rmse == doctest::Approx(std::sqrt((z * z + t * t) / 2)).epsilon(1e-14));
  }
}

TEST_CASE("truth trajectories") {
  auto schema = std::make_shared<const ChannelSchema>(with_static_channels(*wxtest::schema_of({"z500", "t850"})));
  auto grid = std::make_shared<const GridSpec>(GridSpec::cell_centered(6, 12));

  const auto constant = synth_truth(grid, schema, TruthKind::kConstant, 3, 5);
  CHECK(std::ranges::equal(constant.state_at(0).values(), constant.state_at(24).values()));
  CHECK(constant.timestamps().back() == 24);

  const auto adv = synth_truth(grid, schema, TruthKind::kAdvecting, 3, 50);
  RolloutConfig cfg;
  const auto res = run_rollout(PeriodicAdvection(1), adv, cfg);
  CHECK_FALSE(res.records.empty());
  for (const auto& r : res.records) CHECK(r.rmse == 0.0);
  // static channels do not move
  CHECK(std::ranges::equal(adv.state_at(0).channel(3), adv.state_at(6).channel(3)));

  const auto dec = synth_truth(grid, schema, TruthKind::kDecaying, 3, 42);
  const auto ident = linear_surrogate(1.0, {0.0, 0.0});
  const auto x0 = dec.state_at(0);
  const auto zero = x0.with_values(std::vector<double>(x0.values().size(), 0.0), 0);
  const auto base = area_weighted_rmse(x0, zero);
  const auto drec = run_rollout(*ident, dec, cfg);
  for (const auto& r : drec.records) {
    if (r.ic_timestamp != 0 || r.channel == kPooledChannel) continue;
    const std::size_t c = r.channel == "z500" ? 0 : 1;
    const double want = std::abs(1 - std::pow(kDecayFactor, r.lead_hours / 6)) * base[c];
    CHECK(std::abs(r.rmse - want) <= 1e-12 * want);
  }

  const auto again = synth_truth(grid, schema, TruthKind::kDecaying, 3, 42);
  CHECK(again.checksum() == dec.checksum());
  CHECK(synth_truth(grid, schema, TruthKind::kDecaying, 4, 42).checksum() != dec.checksum());
  CHECK_THROWS_AS(truth_kind_from_string("spiral"), Error);
}

}  // TEST_SUITE
