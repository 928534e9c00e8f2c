#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wxscale/grid.hpp"
#include "wxscale/metrics.hpp"
#include "wxscale/rollout.hpp"
#include "wxscale/scaling.hpp"

namespace wxscale {

/// Power-law terms of eps = E + A / N^a + B / D^b.
struct SurfaceTerms {
  double amp_n = 400.0;
  double exp_n = 0.5;
  double amp_d = 400.0;
  double exp_d = 0.5;
  bool operator==(const SurfaceTerms&) const = default;
};

struct SurfaceSpec {
  double e_floor = 0.0;
  SurfaceTerms terms;
  double kappa = kDefaultKappa;
  /// Multiplicative log-normal noise: eps * exp(noise_sigma * g), g ~ N(0, 1).
  double noise_sigma = 0.0;
  std::map<std::string, SurfaceTerms> per_channel_overrides;

  void validate() const;
  const SurfaceTerms& terms_for(const std::string& channel) const;
};

nlohmann::ordered_json to_json(const SurfaceSpec& spec);

/// Noise-free surface value.
double surface_loss(const SurfaceSpec& spec, double n, double d);
double surface_loss(double e_floor, const SurfaceTerms& t, double n, double d);
/// Surface value with one draw of log-normal noise from `rng` when noise_sigma > 0.
double surface_loss(const SurfaceSpec& spec, double n, double d, std::mt19937_64& rng);

/// Minimiser of A / N^a + B (kappa N / C)^b over N:
/// N* = (a A / (b B kappa^b))^(1/(a+b)) * C^(b/(a+b)).
double analytic_optimum_n(const SurfaceTerms& t, double kappa, double c_flops);

/**
 * Lead-time modulation of the synthetic error.
 *
 * With t = (lead - first) / (last - first) in [0, 1], the error at a lead is
 * (1 + growth * t) * L^(1 - flattening * t), where L is the surface value.
 * Exponents therefore flatten toward long leads while the optimum N stays put.
 */
struct HorizonModulation {
  double flattening = 0.5;
  double growth = 1.0;

  double exponent(int lead, int first, int last) const;
  double factor(int lead, int first, int last) const;
  double apply(double loss, int lead, int first, int last) const;
};

struct FamilyOptions {
  std::vector<int> leads{6};
  std::vector<std::string> channels{"z500"};
  HorizonModulation horizon;
  bool include_pooled = true;
  std::uint64_t seed = 0;
  std::string run_prefix = "r";
};

struct IsoflopFamily {
  std::vector<RunPoint> runs;
  /// Sorted by (run, lead, channel order), pooled last.
  std::vector<MetricRecord> records;
};

/**
 * Per budget, a geometric sweep of N over one decade either side of the
 * base-surface optimum with D = C / (kappa N). Channel errors come from the
 * channel's surface terms; the pooled channel is the root mean square over
 * channels.
 */
IsoflopFamily make_isoflop_family(const SurfaceSpec& spec, std::span<const double> budgets,
                                  std::size_t n_per_budget, const FamilyOptions& options = {});

nlohmann::ordered_json generator_manifest(const SurfaceSpec& spec, std::span<const double> budgets,
                                          std::size_t n_per_budget, const FamilyOptions& options);

enum class TruthKind { kConstant, kDecaying, kAdvecting };

std::string_view to_string(TruthKind k);
TruthKind truth_kind_from_string(std::string_view s);

inline constexpr double kDecayFactor = 0.9;

/**
 * Synthetic truth trajectory with `n_states` states every 6 h from t = 0.
 *
 * A seeded pattern (uniform in [-1, 1]) is held fixed, multiplied by 0.9 per
 * step, or shifted one cell east per step. Static channels never change.
 */
MemoryTruth synth_truth(std::shared_ptr<const GridSpec> grid,
                        std::shared_ptr<const ChannelSchema> schema, TruthKind kind,
                        std::uint64_t seed, std::size_t n_states);

}  // namespace wxscale
