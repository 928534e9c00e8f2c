#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wxscale/grid.hpp"
#include "wxscale/layout.hpp"

namespace wxscale {

/// Forecast step of every model in this library.
inline constexpr std::int64_t kStepHours = 6;

struct Shift2 {
  int rows = 0;
  int cols = 0;
  bool operator==(const Shift2&) const = default;
};

/// Latent tokens on the patch grid: rows x cols tokens of `dim` values each.
class PatchTensor {
 public:
  PatchTensor() = default;
  PatchTensor(std::size_t rows, std::size_t cols, std::size_t dim, double fill = 0.0)
      : rows_(rows), cols_(cols), dim_(dim), data_(rows * cols * dim, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t dim() const { return dim_; }

  std::span<double> token(std::size_t i, std::size_t j) {
    return std::span<double>(data_).subspan((i * cols_ + j) * dim_, dim_);
  }
  std::span<const double> token(std::size_t i, std::size_t j) const {
    return std::span<const double>(data_).subspan((i * cols_ + j) * dim_, dim_);
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const PatchTensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Circular shift with roll semantics: out[(i + s) mod H] = in[i].
/// Shifts must satisfy |s| < extent along each axis.
PatchTensor cyclic_shift(const PatchTensor& input, Shift2 shift);

struct SwinConfig {
  std::size_t patch_h = 2;
  std::size_t patch_w = 2;
  std::size_t embed_dim = 8;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  double mlp_ratio = 2.0;
  std::uint64_t seed = 0;
  /// Odd blocks shift the window partition by half a window when set.
  bool shifted = true;

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t hidden_dim() const;
  Shift2 block_shift(std::size_t block) const;

  /// Throws kInvalidArgument unless patches and windows tile the grid.
  void validate(std::size_t n_lat, std::size_t n_lon) const;

  bool operator==(const SwinConfig&) const = default;
};

nlohmann::ordered_json to_json(const SwinConfig& cfg);
SwinConfig swin_config_from_json(const nlohmann::json& j);

/// y = W x + b with W stored row-major (out_dim x in_dim).
struct Dense {
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  void apply(std::span<const double> in, std::span<double> out) const;
};

struct SwinBlockWeights {
  std::vector<double> norm1;
  Dense query, key, value;
  std::vector<double> temperature;    // one per head, scales normalised q.k
  std::vector<double> relative_bias;  // heads x (2 win_h - 1) x (2 win_w - 1)
  Dense proj;
  std::vector<double> norm2;
  Dense fc1, fc2;
};

/**
 * Deterministic weights for a shifted-window forecaster.
 *
 * Scalars are drawn from std::mt19937_64 seeded with `cfg.seed`; each 64-bit
 * output x maps to u = (x >> 11) * 2^-53 and then to bound * (2u - 1).
 * Tensors are drawn in a fixed order: embed (weight, bias), then per block
 * norm1, query, key, value, temperature, relative bias, proj, norm2, fc1,
 * fc2, and finally the head. Dense weights use bound 1/sqrt(fan_in), biases
 * 0.1, relative bias 0.5. Norm gains are 1 + 0.1 * (2u - 1), temperatures
 * 8 + 4u.
 */
struct SwinWeights {
  Dense embed;
  std::vector<SwinBlockWeights> blocks;
  Dense head;
  std::size_t scalar_count = 0;

  static SwinWeights generate(const SwinConfig& cfg, std::size_t in_channels,
                              std::size_t out_channels);
};

/// Building blocks shared by the sequential and the decomposed forward pass.
namespace swin {

inline constexpr double kNormEpsilon = 1e-6;

void rms_norm(std::span<const double> x, std::span<const double> gain, std::span<double> out);

/// Flattened (channel, dy, dx) patch vector of every schema channel.
void gather_patch(const FieldState& state, const SwinConfig& cfg, std::size_t pi, std::size_t pj,
                  std::span<double> out);

/// Writes a head output vector into forecast channels of `values`.
void scatter_patch(std::span<const double> patch, const ChannelSchema& schema,
                   const GridSpec& grid, const SwinConfig& cfg, std::size_t pi, std::size_t pj,
                   std::span<double> values);

/**
 * Windowed multi-head attention for heads [head_begin, head_end).
 *
 * Windows of cfg.window_h x cfg.window_w tokens tile `input` from the origin;
 * `windows_r x windows_c` of them are evaluated and tokens outside are left
 * zero. Tokens attend only to tokens of the same window with equal `groups`
 * entry. The result is the output projection restricted to the selected
 * heads, with the projection bias added only when `add_bias` is set, so the
 * full output is the sum over any partition of heads.
 */
PatchTensor window_attention(const SwinBlockWeights& w, const SwinConfig& cfg,
                             const PatchTensor& input, std::span<const int> groups,
                             std::size_t windows_r, std::size_t windows_c, std::size_t head_begin,
                             std::size_t head_end, bool add_bias);

/// MLP contribution of hidden units [hidden_begin, hidden_end); fc2 bias only when add_bias.
void mlp_partial(const SwinBlockWeights& w, std::span<const double> x, std::size_t hidden_begin,
                 std::size_t hidden_end, bool add_bias, std::span<double> out);

/// Group ids separating rows that wrapped across the north/south seam after a
/// shift of -shift_rows: global row g is in group 1 when g + shift_rows >= total_rows.
std::vector<int> seam_groups(std::size_t rows, std::size_t cols, std::size_t global_row0,
                             std::size_t total_rows, int shift_rows);

}  // namespace swin

/// One-step forecast map advancing the state by kStepHours.
class OneStepModel {
 public:
  virtual ~OneStepModel() = default;
  virtual FieldState step(const FieldState& state) const = 0;
  virtual std::size_t param_count() const = 0;
  virtual nlohmann::ordered_json describe() const = 0;
};

/// Sequential shifted-window forecaster with seed-generated weights.
class SwinForecaster : public OneStepModel {
 public:
  SwinForecaster(SwinConfig cfg, const ChannelSchema& schema, const GridSpec& grid);

  FieldState step(const FieldState& state) const override;
  std::size_t param_count() const override { return weights_.scalar_count; }
  nlohmann::ordered_json describe() const override;

  const SwinConfig& config() const { return cfg_; }
  const SwinWeights& weights() const { return weights_; }
  std::size_t patch_rows() const { return patch_rows_; }
  std::size_t patch_cols() const { return patch_cols_; }

  PatchTensor embed(const FieldState& state) const;
  /// Applies block `index` to the whole latent grid.
  PatchTensor apply_block(std::size_t index, const PatchTensor& x) const;
  /// Head projection; static channels are copied from `input`.
  FieldState unembed(const PatchTensor& latent, const FieldState& input) const;

 private:
  void check_input(const FieldState& state) const;

  SwinConfig cfg_;
  ChannelSchema schema_;
  GridSpec grid_;
  std::size_t patch_rows_;
  std::size_t patch_cols_;
  SwinWeights weights_;
};

/// step(x) = rho * x + drift[c] on forecast channels; static channels pass through.
class LinearSurrogate : public OneStepModel {
 public:
  LinearSurrogate(double rho, std::vector<double> drift);

  FieldState step(const FieldState& state) const override;
  std::size_t param_count() const override { return drift_.size() + 1; }
  nlohmann::ordered_json describe() const override;

 private:
  double rho_;
  std::vector<double> drift_;
};

/// Per-channel drift; rho must lie in (0, 1].
std::unique_ptr<OneStepModel> linear_surrogate(double rho, std::vector<double> drift);

/// Shifts forecast channels `cells` columns eastward per step (periodic).
class PeriodicAdvection : public OneStepModel {
 public:
  explicit PeriodicAdvection(int cells = 1) : cells_(cells) {}

  FieldState step(const FieldState& state) const override;
  std::size_t param_count() const override { return 0; }
  nlohmann::ordered_json describe() const override;

 private:
  int cells_;
};

/// Wraps a model that works in normalised units.
class NormalizedModel : public OneStepModel {
 public:
  NormalizedModel(std::shared_ptr<const OneStepModel> inner, NormStats stats)
      : inner_(std::move(inner)), stats_(std::move(stats)) {}

  FieldState step(const FieldState& state) const override;
  std::size_t param_count() const override { return inner_->param_count(); }
  nlohmann::ordered_json describe() const override;

 private:
  std::shared_ptr<const OneStepModel> inner_;
  NormStats stats_;
};

/// Builds a model from its JSON description (`kind`: swin, linear, identity, advect).
std::unique_ptr<OneStepModel> model_from_json(const nlohmann::json& j, const ChannelSchema& schema,
                                              const GridSpec& grid);

/// Activation elements held per worker:
/// B * ceil(H_p / sp1) * ceil(W_p / sp2) * E * depth * kappa_act.
/// The default kappa_act = 1 counts one E-vector per token per block.
double activation_footprint(const SwinConfig& cfg, std::size_t patch_rows, std::size_t patch_cols,
                            std::size_t batch, const DecompLayout& layout,
                            double kappa_act = 1.0);

}  // namespace wxscale
