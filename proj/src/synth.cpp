#include "wxscale/synth.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"

namespace wxscale {

namespace {

void validate_terms(const SurfaceTerms& t, const std::string& where) {
  if (!(t.amp_n > 0.0 && t.amp_d > 0.0 && t.exp_n > 0.0 && t.exp_d > 0.0)) {
    throw Error(ErrorCode::kConfig, where + ": A, B, a and b must be positive");
  }
}

nlohmann::ordered_json terms_json(const SurfaceTerms& t) {
  return {{"amp_n", t.amp_n}, {"exp_n", t.exp_n}, {"amp_d", t.amp_d}, {"exp_d", t.exp_d}};
}

}  // namespace

void SurfaceSpec::validate() const {
  validate_terms(terms, "surface");
  for (const auto& [name, t] : per_channel_overrides) validate_terms(t, "override " + name);
  if (!(e_floor >= 0.0)) throw Error(ErrorCode::kConfig, "e_floor must be non-negative");
  if (!(kappa > 0.0)) throw Error(ErrorCode::kConfig, "kappa must be positive");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kConfig, "noise_sigma must be non-negative");
}

const SurfaceTerms& SurfaceSpec::terms_for(const std::string& channel) const {
  const auto it = per_channel_overrides.find(channel);
  return it == per_channel_overrides.end() ? terms : it->second;
}

nlohmann::ordered_json to_json(const SurfaceSpec& spec) {
  nlohmann::ordered_json j;
  j["e_floor"] = spec.e_floor;
  j["terms"] = terms_json(spec.terms);
  j["kappa"] = spec.kappa;
  j["noise_sigma"] = spec.noise_sigma;
  auto ov = nlohmann::ordered_json::object();
  for (const auto& [name, t] : spec.per_channel_overrides) ov[name] = terms_json(t);
  j["per_channel_overrides"] = ov;
  return j;
}

double surface_loss(double e_floor, const SurfaceTerms& t, double n, double d) {
  if (!(n > 0.0) || !(d > 0.0)) throw Error(ErrorCode::kInvalidArgument, "N and D must be positive");
  return e_floor + t.amp_n / std::pow(n, t.exp_n) + t.amp_d / std::pow(d, t.exp_d);
}

double surface_loss(const SurfaceSpec& spec, double n, double d) {
  return surface_loss(spec.e_floor, spec.terms, n, d);
}

double surface_loss(const SurfaceSpec& spec, double n, double d, std::mt19937_64& rng) {
  const double base = surface_loss(spec, n, d);
  if (spec.noise_sigma == 0.0) return base;
  std::normal_distribution<double> g(0.0, 1.0);
  return base * std::exp(spec.noise_sigma * g(rng));
}

double analytic_optimum_n(const SurfaceTerms& t, double kappa, double c_flops) {
  const double a = t.exp_n;
  const double b = t.exp_d;
  const double k = (a * t.amp_n) / (b * t.amp_d * std::pow(kappa, b));
  return std::pow(k, 1.0 / (a + b)) * std::pow(c_flops, b / (a + b));
}

namespace {

double lead_fraction(int lead, int first, int last) {
  return last == first ? 0.0 : static_cast<double>(lead - first) / static_cast<double>(last - first);
}

}  // namespace

double HorizonModulation::exponent(int lead, int first, int last) const {
  return 1.0 - flattening * lead_fraction(lead, first, last);
}

double HorizonModulation::factor(int lead, int first, int last) const {
  return 1.0 + growth * lead_fraction(lead, first, last);
}

double HorizonModulation::apply(double loss, int lead, int first, int last) const {
  return factor(lead, first, last) * std::pow(loss, exponent(lead, first, last));
}

IsoflopFamily make_isoflop_family(const SurfaceSpec& spec, std::span<const double> budgets,
                                  std::size_t n_per_budget, const FamilyOptions& options) {
  spec.validate();
  if (budgets.empty()) throw Error(ErrorCode::kConfig, "no budgets given");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(budgets[i] > 0.0)) throw Error(ErrorCode::kConfig, "budgets must be positive");
    if (i > 0 && !(budgets[i] > budgets[i - 1])) {
      throw Error(ErrorCode::kConfig, "budgets must be strictly increasing");
    }
  }
  if (n_per_budget < 3) throw Error(ErrorCode::kConfig, "n_per_budget must be at least 3");
  if (options.leads.empty() || options.channels.empty()) {
    throw Error(ErrorCode::kConfig, "leads and channels must be non-empty");
  }
  if (!(options.horizon.flattening < 1.0) || !(options.horizon.flattening >= 0.0) ||
      !(options.horizon.growth >= 0.0)) {
    throw Error(ErrorCode::kConfig, "horizon flattening must lie in [0, 1) and growth be non-negative");
  }
  for (std::size_t i = 1; i < options.leads.size(); ++i) {
    if (options.leads[i] <= options.leads[i - 1]) {
      throw Error(ErrorCode::kConfig, "leads must be strictly increasing");
    }
  }
  for (const auto& [name, t] : spec.per_channel_overrides) {
    if (std::ranges::find(options.channels, name) == options.channels.end()) {
      throw Error(ErrorCode::kConfig, "override for unknown channel " + name);
    }
  }
  const int first = options.leads.front();
  const int last = options.leads.back();

  IsoflopFamily family;
  std::mt19937_64 rng(options.seed);
  for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
    const double c = budgets[bi];
    const double n_center = analytic_optimum_n(spec.terms, spec.kappa, c);
    const std::string budget_id = "b" + std::to_string(bi);
    for (std::size_t j = 0; j < n_per_budget; ++j) {
      const double decades = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n_per_budget - 1);
      const double n = n_center * std::pow(10.0, decades);
      const double d = c / (spec.kappa * n);
      if (d < 1.0) {
        throw Error(ErrorCode::kConfig, "budget " + io::format_double(c) +
                                            " is too small: D < 1 sample at N = " + io::format_double(n));
      }
      RunPoint run{options.run_prefix + std::to_string(bi) + "_" + std::to_string(j), n, d, c, budget_id};
      for (int lead : options.leads) {
        double sum_sq = 0.0;
        for (const auto& ch : options.channels) {
          double loss = surface_loss(spec.e_floor, spec.terms_for(ch), n, d);
          loss = options.horizon.apply(loss, lead, first, last);
          if (spec.noise_sigma > 0.0) {
            std::normal_distribution<double> g(0.0, 1.0);
            loss *= std::exp(spec.noise_sigma * g(rng));
          }
          sum_sq += loss * loss;
          family.records.push_back({run.run_id, 0, lead, ch, loss});
        }
        if (options.include_pooled) {
          family.records.push_back({run.run_id, 0, lead, std::string(kPooledChannel),
                                    std::sqrt(sum_sq / static_cast<double>(options.channels.size()))});
        }
      }
      family.runs.push_back(std::move(run));
    }
  }
  return family;
}

nlohmann::ordered_json generator_manifest(const SurfaceSpec& spec, std::span<const double> budgets,
                                          std::size_t n_per_budget, const FamilyOptions& options) {
  nlohmann::ordered_json j;
  j["format"] = "wxscale-synth-manifest";
  j["version"] = 1;
  j["seed"] = options.seed;
  j["surface"] = to_json(spec);
  j["surface_formula"] = "eps = e_floor + amp_n / N^exp_n + amp_d / D^exp_d, D = C / (kappa N)";
  j["noise"] = "eps * exp(noise_sigma * g), g ~ N(0, 1) drawn per (run, lead, channel) in output order";
  j["budgets"] = std::vector<double>(budgets.begin(), budgets.end());
  j["n_per_budget"] = n_per_budget;
  j["n_sweep"] = "geometric, one decade either side of the analytic optimum N*";
  j["leads"] = options.leads;
  j["channels"] = options.channels;
  j["horizon_modulation"] = {
      {"formula", "eps_h = (1 + growth t) * L^(1 - flattening t), t = (lead - first) / (last - first)"},
      {"flattening", options.horizon.flattening},
      {"growth", options.horizon.growth}};
  j["pooled_channel"] = options.include_pooled ? "root mean square of channel errors" : "omitted";
  auto optimum = nlohmann::ordered_json::array();
  for (double c : budgets) {
    optimum.push_back({{"c_flops", c}, {"n_star", analytic_optimum_n(spec.terms, spec.kappa, c)}});
  }
  j["analytic_optimum"] = optimum;
  return j;
}

std::string_view to_string(TruthKind k) {
  switch (k) {
    case TruthKind::kConstant: return "constant";
    case TruthKind::kDecaying: return "decaying";
    case TruthKind::kAdvecting: return "advecting";
  }
  return "constant";
}

TruthKind truth_kind_from_string(std::string_view s) {
  if (s == "constant") return TruthKind::kConstant;
  if (s == "decaying") return TruthKind::kDecaying;
  if (s == "advecting") return TruthKind::kAdvecting;
  throw Error(ErrorCode::kConfig, "unknown truth kind '" + std::string(s) + "'");
}

MemoryTruth synth_truth(std::shared_ptr<const GridSpec> grid,
                        std::shared_ptr<const ChannelSchema> schema, TruthKind kind,
                        std::uint64_t seed, std::size_t n_states) {
  if (n_states == 0) throw Error(ErrorCode::kConfig, "truth needs at least one state");
  const std::size_t n_lat = grid->n_lat();
  const std::size_t n_lon = grid->n_lon();
  const std::size_t plane = n_lat * n_lon;
  std::mt19937_64 rng(seed);
  std::vector<double> base(schema->total() * plane);
  for (auto& v : base) v = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;

  std::vector<FieldState> states;
  states.reserve(n_states);
  for (std::size_t k = 0; k < n_states; ++k) {
    std::vector<double> values(base.size());
    const double scale = kind == TruthKind::kDecaying ? std::pow(kDecayFactor, static_cast<double>(k)) : 1.0;
    const std::size_t shift = kind == TruthKind::kAdvecting ? k % n_lon : 0;
    for (std::size_t c = 0; c < schema->total(); ++c) {
      const bool moves = (*schema)[c].forecast();
      for (std::size_t i = 0; i < n_lat; ++i) {
        for (std::size_t j = 0; j < n_lon; ++j) {
          const std::size_t src = moves ? (j + n_lon - shift) % n_lon : j;
          const double v = base[c * plane + i * n_lon + src];
          values[c * plane + i * n_lon + j] = moves ? scale * v : v;
        }
      }
    }
    states.emplace_back(schema, grid, std::move(values), static_cast<std::int64_t>(k) * kStepHours);
  }
  return MemoryTruth(std::move(states));
}

}  // namespace wxscale
