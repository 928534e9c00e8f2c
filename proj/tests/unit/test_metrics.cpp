#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "wxscale/errors.hpp"
#include "wxscale/metrics.hpp"

using namespace wxscale;

namespace {

// Brute-force reference: explicit triple loop, weights from cos directly.
std::vector<double> flat_rmse(const FieldState& p, const FieldState& t) {
  const auto lat = p.grid().lat_values();
  double wsum = 0.0;
  for (double l : lat) wsum += std::max(0.0, std::cos(l * 3.141592653589793 / 180.0));
  std::vector<double> out;
  for (std::size_t c = 0; c < p.schema().total(); ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.grid().n_lat(); ++i) {
      const double w = std::max(0.0, std::cos(lat[i] * 3.141592653589793 / 180.0)) * lat.size() / wsum;
      for (std::size_t j = 0; j < p.grid().n_lon(); ++j) {
        const double d = p.at(c, i, j) - t.at(c, i, j);
        acc += w * d * d;
      }
    }
    out.push_back(std::sqrt(acc / p.grid().points()));
  }
  return out;
}

double flat_pooled(const FieldState& p, const FieldState& t) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < p.schema().total(); ++c) {
    if (!p.schema()[c].forecast()) continue;
    for (std::size_t i = 0; i < p.grid().n_lat(); ++i) {
      for (std::size_t j = 0; j < p.grid().n_lon(); ++j) {
        const double d = p.at(c, i, j) - t.at(c, i, j);
        acc += d * d;
        ++n;
      }
    }
  }
  return std::sqrt(acc / n);
}

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("identical fields give zero") {
  const auto s = wxtest::random_state(wxtest::schema_of({"z500", "t850"}), wxtest::grid_of(4, 6), 1);
  for (double r : area_weighted_rmse(s, s)) CHECK(r == 0.0);
  CHECK(pooled_rmse(s, s) == 0.0);
  CHECK(mse_loss(s, s) == 0.0);
}

TEST_CASE("cos-weight hand example") {
  auto grid = std::make_shared<const GridSpec>(GridSpec::from_values({30.0, 60.0}, {0.0, 180.0}));
  auto schema = wxtest::schema_of({"z500"});
  const FieldState truth(schema, grid, {0.0, 0.0, 0.0, 0.0}, 0);
  const FieldState pred(schema, grid, {1.0, 1.0, 2.0, 2.0}, 0);
  CHECK(area_weighted_rmse(pred, truth)[0] == doctest::Approx(1.44846).epsilon(1e-5));
}

TEST_CASE("uniform rows and a constant difference") {
  const std::vector<double> ones(3, 1.0);
  std::vector<double> pred(2 * 3 * 4, 0.25), truth(2 * 3 * 4, 0.0);
  for (double r : area_weighted_rmse(pred, truth, 2, 4, ones)) CHECK(r == doctest::Approx(0.25));
}

TEST_CASE("pooled examples") {
  auto grid = wxtest::grid_of(2, 3);
  auto schema = wxtest::schema_of({"z500", "t850"});
  const auto truth = wxtest::constant_state(schema, grid, 0.0);
  std::vector<double> v(12);
  std::fill(v.begin(), v.begin() + 6, 3.0);
  std::fill(v.begin() + 6, v.end(), 4.0);
  const FieldState pred(schema, grid, v, 0);
  CHECK(pooled_rmse(pred, truth) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-14));
  CHECK(mse_loss(pred, truth) == doctest::Approx(12.5).epsilon(1e-14));

  auto small = wxtest::grid_of(2, 2);
  auto s1 = wxtest::schema_of({"t2m"});
  const FieldState a(s1, small, {-2.0, -2.0, -2.0, -2.0}, 0), b(s1, small, {0.0, 0.0, 0.0, 0.0}, 0);
  CHECK(pooled_rmse(a, b) == 2.0);
  CHECK(mse_loss(a, b) == 4.0);
}

TEST_CASE("random instances against the flat-loop oracle") {
  auto schema = wxtest::schema_of({"z500", "t850", "u10m"});
  for (std::uint64_t k = 0; k < 50; ++k) {
    auto grid = wxtest::grid_of(4, 5);
    const auto p = wxtest::random_state(schema, grid, 1000 + k);
    const auto t = wxtest::random_state(schema, grid, 2000 + k);
    const auto got = area_weighted_rmse(p, t);
    const auto want = flat_rmse(p, t);
    for (std::size_t c = 0; c < got.size(); ++c) CHECK(rel_close(got[c], want[c], 1e-12));
    CHECK(rel_close(pooled_rmse(p, t), flat_pooled(p, t), 1e-12));
  }
}

TEST_CASE("pooled ignores static channels") {
  auto schema = std::make_shared<const ChannelSchema>(with_static_channels(*wxtest::schema_of({"z500"})));
  auto grid = wxtest::grid_of(2, 2);
  std::vector<double> v(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) v[i] = 1.0;
  for (std::size_t i = 4; i < 16; ++i) v[i] = 100.0;
  const FieldState p(schema, grid, v, 0);
  const auto t = wxtest::constant_state(schema, grid, 0.0);
  CHECK(pooled_rmse(p, t) == doctest::Approx(1.0));
}

TEST_CASE("channel permutation invariance") {
  auto grid = wxtest::grid_of(3, 4);
  auto s1 = wxtest::schema_of({"z500", "t850", "t2m"});
  auto s2 = wxtest::schema_of({"t2m", "z500", "t850"});
  const auto p = wxtest::random_state(s1, grid, 9);
  const auto t = wxtest::random_state(s1, grid, 10);
  auto permute = [&](const FieldState& s) {
    std::vector<double> v;
    for (std::size_t c : {2u, 0u, 1u}) v.insert(v.end(), s.channel(c).begin(), s.channel(c).end());
    return FieldState(s2, grid, v, 0);
  };
  const auto a = area_weighted_rmse(p, t);
  const auto b = area_weighted_rmse(permute(p), permute(t));
  CHECK(b[0] == a[2]);
  CHECK(b[1] == a[0]);
  CHECK(b[2] == a[1]);
  CHECK(rel_close(pooled_rmse(permute(p), permute(t)), pooled_rmse(p, t), 1e-14));
}

TEST_CASE("layout mismatch") {
  const auto p = wxtest::random_state(wxtest::schema_of({"z500"}), wxtest::grid_of(2, 4), 1);
  const auto t = wxtest::random_state(wxtest::schema_of({"t850"}), wxtest::grid_of(2, 4), 1);
  CHECK_THROWS_AS(area_weighted_rmse(p, t), Error);
  try {
    pooled_rmse(p, t);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchemaMismatch);
  }
}

TEST_CASE("error growth examples") {
  const std::vector<int> leads{6, 12, 18, 24, 30, 36, 42, 48};
  std::vector<double> constant(leads.size(), 3.0), linear;
  for (int l : leads) linear.push_back(l);
  for (double d : error_growth(leads, constant).d_rmse_dt) CHECK(d == 0.0);
  for (double d : error_growth(leads, linear).d_rmse_dt) CHECK(std::abs(d - 1.0) < 1e-12);

  const std::vector<int> l3{6, 12, 18};
  const std::vector<double> sq{36.0, 144.0, 324.0};
  const auto g = error_growth(l3, sq, "z500");
  CHECK(g.d_rmse_dt[1] == doctest::Approx(24.0).epsilon(1e-14));
  CHECK(g.d_rmse_dt[0] == doctest::Approx((144.0 - 36.0) / 6.0));
  CHECK(g.d_rmse_dt[2] == doctest::Approx((324.0 - 144.0) / 6.0));
  CHECK(g.channel == "z500");
  CHECK(g.lead_hours == l3);
}

TEST_CASE("error growth is exact on quadratics at interior leads") {
  std::vector<int> leads;
  std::vector<double> y;
  for (int k = 1; k <= 40; ++k) {
    leads.push_back(6 * k);
    y.push_back(0.002 * 36.0 * k * k - 0.3 * 6.0 * k + 1.5);
  }
  const auto g = error_growth(leads, y);
  for (std::size_t i = 1; i + 1 < leads.size(); ++i) {
    CHECK(std::abs(g.d_rmse_dt[i] - (0.004 * leads[i] - 0.3)) < 1e-12);
  }
}

TEST_CASE("error growth rejects bad series") {
  const std::vector<int> one{6};
  const std::vector<double> v1{1.0};
  CHECK_THROWS_AS(error_growth(one, v1), Error);
  const std::vector<int> dup{6, 6, 12};
  const std::vector<double> v3{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(error_growth(dup, v3), Error);
}

TEST_CASE("moving average") {
  const std::vector<double> v{1, 2, 3, 10};
  const auto m = moving_average(v, 3);
  CHECK(m[0] == doctest::Approx(1.5));
  CHECK(m[1] == doctest::Approx(2.0));
  CHECK(m[2] == doctest::Approx(5.0));
  CHECK(m[3] == doctest::Approx(6.5));
  CHECK(moving_average(v, 1) == v);
  CHECK_THROWS_AS(moving_average(v, 2), Error);
}

TEST_CASE("metrics csv round trip") {
  std::vector<MetricRecord> recs{{"r0", 0, 6, "z500", 0.1},
                                 {"r0", 12, 6, std::string(kPooledChannel), 1.0 / 3.0}};
  const auto text = metrics_csv(recs);
  CHECK(text.rfind("run_id,ic_timestamp,lead_hours,channel,rmse\n", 0) == 0);
  CHECK(parse_metrics_csv(text) == recs);
}

}  // TEST_SUITE
