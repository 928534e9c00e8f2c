#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "wxscale/cli.hpp"
#include "wxscale/decomp.hpp"
#include "wxscale/errors.hpp"
#include "wxscale/forecaster.hpp"
#include "wxscale/grid.hpp"
#include "wxscale/metrics.hpp"
#include "wxscale/scaling.hpp"
#include "wxscale/synth.hpp"

namespace py = pybind11;
using namespace wxscale;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict optimum_dict(const IsoflopOptimum& o) {
  py::dict d;
  d["budget_id"] = o.budget_id;
  d["c_flops"] = o.c_flops;
  d["n_star"] = o.n_star;
  d["d_star"] = o.d_star;
  d["eps_star"] = o.eps_star;
  d["curvature"] = o.curvature;
  d["n_points"] = o.n_points;
  d["extrapolated"] = o.extrapolated;
  return d;
}

// Builds a FieldState over a cell-centred grid from a (channels, lat, lon) array.
FieldState make_state(const Array& values, const std::vector<std::string>& channels) {
  if (values.ndim() != 3) throw Error(ErrorCode::kInvalidArgument, "values must be (channels, lat, lon)");
  const auto canonical = canonical_schema();
  std::vector<ChannelInfo> entries;
  for (const auto& c : channels) {
    const auto idx = canonical.index_of(c);
    if (!idx) throw Error(ErrorCode::kInvalidArgument, "unknown channel " + c);
    entries.push_back(canonical[*idx]);
  }
  auto schema = std::make_shared<const ChannelSchema>(std::move(entries));
  if (static_cast<std::size_t>(values.shape(0)) != schema->total()) {
    throw Error(ErrorCode::kSchemaMismatch, "channel count does not match values");
  }
  auto grid = std::make_shared<const GridSpec>(
      GridSpec::cell_centered(static_cast<std::size_t>(values.shape(1)), static_cast<std::size_t>(values.shape(2))));
  return FieldState(schema, grid, to_vector(values), 0);
}

Array state_array(const FieldState& s) {
  Array out({s.schema().total(), s.grid().n_lat(), s.grid().n_lon()});
  std::copy(s.values().begin(), s.values().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_wxscale, m) {
  m.doc() = "Bindings for the wxscale C++ library";

  py::register_exception<Error>(m, "WxscaleError");

  m.def("canonical_channels", [] {
    std::vector<py::tuple> out;
    for (const auto& c : canonical_schema().entries()) {
      out.push_back(py::make_tuple(c.name, c.unit, std::string(to_string(c.kind)), c.level_hpa.value_or(0)));
    }
    return out;
  }, "(name, unit, kind, level_hpa) for the 71 canonical channels");

  m.def("latitude_weights", [](const Array& lat) { return latitude_weights(to_vector(lat)); }, py::arg("lat_degrees"));

  m.def("area_weighted_rmse", [](const Array& pred, const Array& truth, const Array& weights) {
    if (pred.ndim() != 3 || truth.ndim() != 3) throw Error(ErrorCode::kInvalidArgument, "arrays must be (channels, lat, lon)");
    return area_weighted_rmse(to_vector(pred), to_vector(truth), static_cast<std::size_t>(pred.shape(0)),
                              static_cast<std::size_t>(pred.shape(2)), to_vector(weights));
  }, py::arg("pred"), py::arg("truth"), py::arg("lat_weights"));

  m.def("error_growth", [](const std::vector<int>& leads, const Array& rmse) {
    return error_growth(leads, to_vector(rmse)).d_rmse_dt;
  }, py::arg("lead_hours"), py::arg("rmse"));

  m.def("fit_isoflop_optimum", [](const Array& n, const Array& eps, double c_flops, double kappa) {
    return optimum_dict(fit_isoflop_optimum(to_vector(n), to_vector(eps), c_flops, kappa));
  }, py::arg("n_params"), py::arg("eps"), py::arg("c_flops"), py::arg("kappa") = kDefaultKappa);

  m.def("fit_power_law", [](const Array& s, const Array& eps) {
    const auto f = fit_power_law(to_vector(s), to_vector(eps));
    py::dict d;
    d["a"] = f.intercept;
    d["b"] = f.slope;
    d["r2"] = f.r2;
    d["n_points"] = f.n_points;
    d["flags"] = f.flags;
    return d;
  }, py::arg("s"), py::arg("eps"));

  m.def("fit_allocation", [](const Array& c, const Array& n_star, const Array& d_star) {
    std::vector<IsoflopOptimum> optima(static_cast<std::size_t>(c.size()));
    for (std::size_t i = 0; i < optima.size(); ++i) {
      optima[i].c_flops = c.data()[i];
      optima[i].n_star = n_star.data()[i];
      optima[i].d_star = d_star.data()[i];
    }
    const auto a = fit_allocation(optima);
    py::dict d;
    d["alpha"] = a.alpha;
    d["beta"] = a.beta;
    d["alpha_plus_beta"] = a.alpha_plus_beta;
    d["consistent"] = a.consistent;
    return d;
  }, py::arg("c_flops"), py::arg("n_star"), py::arg("d_star"));

  m.def("analytic_optimum_n", [](double amp_n, double exp_n, double amp_d, double exp_d, double kappa, double c) {
    return analytic_optimum_n(SurfaceTerms{amp_n, exp_n, amp_d, exp_d}, kappa, c);
  }, py::arg("amp_n"), py::arg("exp_n"), py::arg("amp_d"), py::arg("exp_d"), py::arg("kappa"), py::arg("c_flops"));

  m.def("surface_loss", [](double e, double amp_n, double exp_n, double amp_d, double exp_d, double n, double d) {
    return surface_loss(e, SurfaceTerms{amp_n, exp_n, amp_d, exp_d}, n, d);
  }, py::arg("e_floor"), py::arg("amp_n"), py::arg("exp_n"), py::arg("amp_d"), py::arg("exp_d"), py::arg("n"), py::arg("d"));

  m.def("make_isoflop_family", [](const std::vector<double>& budgets, std::size_t n_per_budget,
                                   const std::vector<int>& leads, const std::vector<std::string>& channels,
                                   double amp_n, double exp_n, double amp_d, double exp_d, double kappa,
                                   double noise_sigma, std::uint64_t seed) {
    SurfaceSpec spec;
    spec.terms = {amp_n, exp_n, amp_d, exp_d};
    spec.kappa = kappa;
    spec.noise_sigma = noise_sigma;
    FamilyOptions opts;
    opts.leads = leads;
    opts.channels = channels;
    opts.seed = seed;
    const auto fam = make_isoflop_family(spec, budgets, n_per_budget, opts);
    return py::make_tuple(runs_csv(fam.runs), metrics_csv(fam.records));
  }, py::arg("budgets"), py::arg("n_per_budget"), py::arg("leads") = std::vector<int>{6},
     py::arg("channels") = std::vector<std::string>{"z500"}, py::arg("amp_n") = 400.0, py::arg("exp_n") = 0.5,
     py::arg("amp_d") = 400.0, py::arg("exp_d") = 0.5, py::arg("kappa") = kDefaultKappa,
     py::arg("noise_sigma") = 0.0, py::arg("seed") = 0,
     "Returns (runs_csv, metrics_csv) text");

  m.def("sweep_report_json", [](const std::string& runs_text, const std::string& metrics_text,
                                const std::string& covariates, double kappa) {
    SweepOptions opts;
    opts.covariates = parse_covariates(covariates);
    opts.kappa = kappa;
    return fit_report_json(sweep(parse_runs_csv(runs_text), parse_metrics_csv(metrics_text), opts)).dump();
  }, py::arg("runs_csv"), py::arg("metrics_csv"), py::arg("covariates") = "params,data,compute",
     py::arg("kappa") = kDefaultKappa);

  m.def("swin_step", [](const std::string& config_json, const Array& values, const std::vector<std::string>& channels) {
    const auto state = make_state(values, channels);
    const SwinForecaster model(swin_config_from_json(nlohmann::json::parse(config_json)), state.schema(), state.grid());
    return state_array(model.step(state));
  }, py::arg("config_json"), py::arg("values"), py::arg("channels"));

  m.def("decomposed_swin_step", [](const std::string& config_json, const Array& values,
                                   const std::vector<std::string>& channels, const std::string& layout,
                                   const std::string& strategy) {
    const auto state = make_state(values, channels);
    auto model = std::make_shared<const SwinForecaster>(swin_config_from_json(nlohmann::json::parse(config_json)),
                                                        state.schema(), state.grid());
    DecomposedSwinForecaster dec(model, parse_layout(layout), shift_strategy_from_string(strategy), true);
    auto out = dec.step(state);
    return py::make_tuple(state_array(out), dec.max_deviation());
  }, py::arg("config_json"), py::arg("values"), py::arg("channels"), py::arg("layout"),
     py::arg("strategy") = "roll");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the wxscale command line; returns (exit_code, stdout, stderr)");
}
