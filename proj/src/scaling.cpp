#include "wxscale/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wxscale/io.hpp"

namespace wxscale {

std::string_view to_string(Covariate c) {
  switch (c) {
    case Covariate::kParams: return "params";
    case Covariate::kData: return "data";
    case Covariate::kCompute: return "compute";
  }
  return "compute";
}

Covariate covariate_from_string(std::string_view s) {
  if (s == "params") return Covariate::kParams;
  if (s == "data") return Covariate::kData;
  if (s == "compute") return Covariate::kCompute;
  throw Error(ErrorCode::kInvalidArgument, "unknown covariate '" + std::string(s) + "'");
}

std::vector<Covariate> parse_covariates(std::string_view text) {
  std::vector<Covariate> out;
  for (auto part : io::split(text, ',')) {
    const auto c = covariate_from_string(io::trim(part));
    if (std::ranges::find(out, c) != out.end()) {
      throw Error(ErrorCode::kInvalidArgument, "covariate listed twice: " + std::string(part));
    }
    out.push_back(c);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "no covariates given");
  return out;
}

void validate_runs(std::span<const RunPoint> runs) {
  std::set<std::string> ids;
  std::map<std::string, double> budget_c;
  for (const auto& r : runs) {
    if (!(r.n_params > 0.0 && r.d_samples > 0.0 && r.c_flops > 0.0) || !std::isfinite(r.n_params) ||
        !std::isfinite(r.d_samples) || !std::isfinite(r.c_flops)) {
      throw Error(ErrorCode::kInvalidArgument, "run " + r.run_id + ": N, D and C must be positive");
    }
    if (!ids.insert(r.run_id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate run_id " + r.run_id);
    }
    const auto [it, fresh] = budget_c.emplace(r.budget_id, r.c_flops);
    if (!fresh && std::abs(r.c_flops - it->second) > 0.01 * it->second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "run " + r.run_id + ": compute differs by more than 1% within budget " + r.budget_id);
    }
  }
}

std::string runs_csv(std::span<const RunPoint> runs) {
  std::ostringstream out;
  out << "run_id,n_params,d_samples,c_flops,budget_id\n";
  for (const auto& r : runs) {
    out << r.run_id << ',' << io::format_double(r.n_params) << ',' << io::format_double(r.d_samples)
        << ',' << io::format_double(r.c_flops) << ',' << r.budget_id << '\n';
  }
  return out.str();
}

std::vector<RunPoint> parse_runs_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  const auto c_id = table.column("run_id");
  const auto c_n = table.column("n_params");
  const auto c_d = table.column("d_samples");
  const auto c_c = table.column("c_flops");
  const auto c_b = table.column("budget_id");
  std::vector<RunPoint> runs;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    try {
      runs.push_back({row[c_id], io::parse_double(row[c_n]), io::parse_double(row[c_d]),
                      io::parse_double(row[c_c]), row[c_b]});
      validate_runs(std::span(runs).last(1));
    } catch (const JoinError&) {
      throw;
    } catch (const Error& e) {
      throw JoinError(table.line_numbers[i], e.what());
    }
  }
  validate_runs(runs);
  return runs;
}

Quadratic fit_quadratic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw FitError("insufficient_runs", "quadratic fit needs at least 3 points");
  }
  // Centre x for conditioning, then expand back.
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  Eigen::MatrixXd a(x.size(), 3);
  Eigen::VectorXd b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = x[i] - mean;
    a(static_cast<Eigen::Index>(i), 0) = u * u;
    a(static_cast<Eigen::Index>(i), 1) = u;
    a(static_cast<Eigen::Index>(i), 2) = 1.0;
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  Quadratic out;
  out.q = c(0);
  out.r = c(1) - 2.0 * c(0) * mean;
  out.s = c(2) - c(1) * mean + c(0) * mean * mean;
  return out;
}

IsoflopOptimum fit_isoflop_optimum(std::span<const double> n_params, std::span<const double> eps,
                                   double c_flops, double kappa, std::string budget_id) {
  if (n_params.size() != eps.size()) {
    throw Error(ErrorCode::kInvalidArgument, "N and eps differ in length");
  }
  if (!(kappa > 0.0) || !(c_flops > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "kappa and C must be positive");
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n_params.size(); ++i) {
    if (!(n_params[i] > 0.0) || !(eps[i] > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "N and eps must be positive");
    }
    x.push_back(std::log(n_params[i]));
    y.push_back(std::log(eps[i]));
  }
  const std::set<double> distinct(x.begin(), x.end());
  if (distinct.size() < 3) {
    throw FitError("insufficient_runs", "budget " + budget_id + " has " +
                                            std::to_string(distinct.size()) +
                                            " distinct N values; stage 1 needs 3");
  }
  // Centre x before solving; the vertex is computed in centred coordinates.
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] - mean;
  const auto quad = fit_quadratic(u, y);

  const double span = *distinct.rbegin() - *distinct.begin();
  double y_scale = 1.0;
  for (double v : y) y_scale = std::max(y_scale, std::abs(v));
  if (quad.q * span * span <= 1e-9 * y_scale) {
    throw FitError("non_convex", "budget " + budget_id + " has no interior minimum (curvature " +
                                     io::format_double(quad.q) + ")");
  }
  const double u_star = -quad.r / (2.0 * quad.q);
  const double x_star = mean + u_star;
  IsoflopOptimum out;
  out.budget_id = std::move(budget_id);
  out.c_flops = c_flops;
  out.n_star = std::exp(x_star);
  out.d_star = c_flops / (kappa * out.n_star);
  out.eps_star = std::exp(quad.s - quad.r * quad.r / (4.0 * quad.q));
  out.curvature = quad.q;
  out.n_points = x.size();
  out.extrapolated = x_star < *distinct.begin() || x_star > *distinct.rbegin();
  return out;
}

bool PowerLawFit::has_flag(std::string_view f) const {
  return std::ranges::find(flags, f) != flags.end();
}

PowerLawFit fit_power_law(std::span<const double> s, std::span<const double> eps) {
  if (s.size() != eps.size()) throw Error(ErrorCode::kInvalidArgument, "s and eps differ in length");
  if (s.size() < 3) {
    throw FitError("insufficient_budgets", "power-law fit needs at least 3 points, got " +
                                               std::to_string(s.size()));
  }
  const std::size_t n = s.size();
  std::vector<double> x(n), y(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s[i] > 0.0) || !(eps[i] > 0.0) || !std::isfinite(s[i]) || !std::isfinite(eps[i])) {
      throw Error(ErrorCode::kInvalidArgument, "power-law inputs must be positive and finite");
    }
    x[i] = std::log(s[i]);
    y[i] = std::log(eps[i]);
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double eps_x = 1e-24 * static_cast<double>(n) * std::max(1.0, mx * mx);
  if (sxx <= eps_x) {
    throw FitError("zero_covariate_variance", "covariate has zero variance in log space");
  }
  PowerLawFit fit;
  fit.n_points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double eps_y = 1e-24 * static_cast<double>(n) * std::max(1.0, my * my);
  if (syy <= eps_y) {
    fit.r2 = std::numeric_limits<double>::quiet_NaN();
    fit.flags.push_back("degenerate_r2");
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - (fit.intercept + fit.slope * x[i]);
      ss_res += e * e;
    }
    fit.r2 = 1.0 - ss_res / syy;
  }
  return fit;
}

AllocationFit fit_allocation(std::span<const IsoflopOptimum> optima, double tolerance) {
  if (optima.size() < 3) {
    throw FitError("insufficient_budgets", "allocation fit needs at least 3 budgets, got " +
                                               std::to_string(optima.size()));
  }
  std::vector<double> c, n, d;
  for (const auto& o : optima) {
    c.push_back(o.c_flops);
    n.push_back(o.n_star);
    d.push_back(o.d_star);
  }
  AllocationFit out;
  out.alpha = fit_power_law(c, n).slope;
  out.beta = fit_power_law(c, d).slope;
  out.alpha_plus_beta = out.alpha + out.beta;
  out.tolerance = tolerance;
  out.consistent = std::abs(out.alpha_plus_beta - 1.0) <= tolerance;
  out.n_budgets = optima.size();
  if (!std::isfinite(out.alpha) || !std::isfinite(out.beta)) {
    throw FitError("non_finite", "allocation exponents are not finite");
  }
  return out;
}

const PowerLawFit* SweepCell::fit(Covariate c) const {
  for (const auto& f : fits) {
    if (f.covariate == c) return &f;
  }
  return nullptr;
}

const SweepCell& SweepResult::at(int lead, std::string_view channel) const {
  for (const auto& c : cells) {
    if (c.lead_hours == lead && c.channel == channel) return c;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "no sweep cell for lead " + std::to_string(lead) + ", channel " + std::string(channel));
}

namespace {

struct Budget {
  std::string id;
  double c_flops = 0.0;
  std::vector<std::size_t> runs;  // indices into the runs table
};

}  // namespace

SweepResult sweep(std::span<const RunPoint> runs, std::span<const MetricRecord> records,
                  const SweepOptions& options) {
  validate_runs(runs);
  if (options.covariates.empty()) throw Error(ErrorCode::kInvalidArgument, "no covariates requested");
  if (!(options.kappa > 0.0)) throw Error(ErrorCode::kInvalidArgument, "kappa must be positive");

  std::map<std::string, std::size_t> run_index;
  for (std::size_t i = 0; i < runs.size(); ++i) run_index.emplace(runs[i].run_id, i);

  // Mean over ICs per (run, lead, channel). Rows are numbered as in
  // metrics.csv: the header is row 1.
  std::map<std::tuple<std::size_t, int, std::string>, std::pair<double, std::size_t>> eps;
  std::vector<int> seen_leads;
  std::vector<std::string> seen_channels;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto it = run_index.find(r.run_id);
    if (it == run_index.end()) {
      throw JoinError(i + 2, "run_id '" + r.run_id + "' is not in the runs table");
    }
    auto& [sum, count] = eps[{it->second, r.lead_hours, r.channel}];
    sum += r.rmse;
    ++count;
    if (std::ranges::find(seen_leads, r.lead_hours) == seen_leads.end()) seen_leads.push_back(r.lead_hours);
    if (std::ranges::find(seen_channels, r.channel) == seen_channels.end()) seen_channels.push_back(r.channel);
  }
  std::ranges::sort(seen_leads);

  SweepResult result;
  result.covariates = options.covariates;
  result.kappa = options.kappa;
  result.leads = options.leads.empty() ? seen_leads : options.leads;
  result.channels = options.channels.empty() ? seen_channels : options.channels;

  std::vector<Budget> budgets;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto it = std::ranges::find(budgets, runs[i].budget_id, &Budget::id);
    if (it == budgets.end()) {
      budgets.push_back({runs[i].budget_id, runs[i].c_flops, {}});
      it = budgets.end() - 1;
    }
    it->runs.push_back(i);
  }
  std::ranges::stable_sort(budgets, {}, &Budget::c_flops);

  for (int lead : result.leads) {
    for (const auto& channel : result.channels) {
      SweepCell cell;
      cell.lead_hours = lead;
      cell.channel = channel;
      try {
        for (const auto& b : budgets) {
          std::vector<double> n, e;
          for (auto ri : b.runs) {
            const auto it = eps.find({ri, lead, channel});
            if (it == eps.end()) continue;
            n.push_back(runs[ri].n_params);
            e.push_back(it->second.first / static_cast<double>(it->second.second));
          }
          if (n.empty()) continue;
          cell.optima.push_back(fit_isoflop_optimum(n, e, b.c_flops, options.kappa, b.id));
        }
        if (cell.optima.size() < 3) {
          throw FitError("insufficient_budgets",
                         std::to_string(cell.optima.size()) + " budgets with data; stage 2 needs 3");
        }
        const bool extrapolated =
            std::ranges::any_of(cell.optima, [](const IsoflopOptimum& o) { return o.extrapolated; });
        std::vector<double> eps_star;
        for (const auto& o : cell.optima) eps_star.push_back(o.eps_star);
        for (auto cov : options.covariates) {
          std::vector<double> s;
          for (const auto& o : cell.optima) {
            s.push_back(cov == Covariate::kParams ? o.n_star
                        : cov == Covariate::kData ? o.d_star
                                                  : o.c_flops);
          }
          auto fit = fit_power_law(s, eps_star);
          fit.covariate = cov;
          fit.lead_hours = lead;
          fit.channel = channel;
          if (extrapolated) fit.flags.push_back("extrapolated_optimum");
          cell.fits.push_back(std::move(fit));
        }
        cell.allocation = fit_allocation(cell.optima, options.allocation_tolerance);
      } catch (const FitError& e) {
        cell.status = e.reason();
        cell.detail = e.what();
        cell.fits.clear();
        cell.allocation.reset();
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json fit_report_json(const SweepResult& result) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["log_base"] = "e";
  j["kappa"] = result.kappa;
  j["slope_convention"] = "raw OLS slope of log eps on log s; negative means error falls with s";
  j["pooled_rmse"] = "spatially unweighted, forecast channels only";
  j["covariates"] = nlohmann::ordered_json::array();
  for (auto c : result.covariates) j["covariates"].push_back(std::string(to_string(c)));
  j["leads"] = result.leads;
  j["channels"] = result.channels;

  auto fits = nlohmann::ordered_json::object();
  for (auto cov : result.covariates) {
    auto by_lead = nlohmann::ordered_json::object();
    for (int lead : result.leads) {
      auto by_channel = nlohmann::ordered_json::object();
      for (const auto& ch : result.channels) {
        const auto& cell = result.at(lead, ch);
        nlohmann::ordered_json f;
        if (const auto* fit = cell.fit(cov)) {
          f["a"] = number_or_null(fit->intercept);
          f["b"] = number_or_null(fit->slope);
          f["r2"] = number_or_null(fit->r2);
          f["n_points"] = fit->n_points;
          f["status"] = "ok";
          f["flags"] = fit->flags;
        } else {
          f["a"] = nullptr;
          f["b"] = nullptr;
          f["r2"] = nullptr;
          f["n_points"] = cell.optima.size();
          f["status"] = cell.status;
          f["flags"] = nlohmann::ordered_json::array({cell.detail});
        }
        by_channel[ch] = f;
      }
      by_lead[std::to_string(lead)] = by_channel;
    }
    fits[std::string(to_string(cov))] = by_lead;
  }
  j["fits"] = fits;

  auto stage1 = nlohmann::ordered_json::object();
  auto allocation = nlohmann::ordered_json::object();
  for (int lead : result.leads) {
    auto s_lead = nlohmann::ordered_json::object();
    auto a_lead = nlohmann::ordered_json::object();
    for (const auto& ch : result.channels) {
      const auto& cell = result.at(lead, ch);
      auto arr = nlohmann::ordered_json::array();
      for (const auto& o : cell.optima) {
        arr.push_back({{"budget_id", o.budget_id},
                       {"c_flops", o.c_flops},
                       {"n_star", o.n_star},
                       {"d_star", o.d_star},
                       {"eps_star", o.eps_star},
                       {"curvature", o.curvature},
                       {"n_points", o.n_points},
                       {"extrapolated", o.extrapolated}});
      }
      s_lead[ch] = arr;
      if (cell.allocation) {
        const auto& al = *cell.allocation;
        a_lead[ch] = {{"alpha", al.alpha},
                      {"beta", al.beta},
                      {"alpha_plus_beta", al.alpha_plus_beta},
                      {"consistent", al.consistent},
                      {"tolerance", al.tolerance},
                      {"n_budgets", al.n_budgets}};
      } else {
        a_lead[ch] = {{"status", cell.status}};
      }
    }
    stage1[std::to_string(lead)] = s_lead;
    allocation[std::to_string(lead)] = a_lead;
  }
  j["stage1"] = stage1;
  j["allocation"] = allocation;
  return j;
}

}  // namespace wxscale
