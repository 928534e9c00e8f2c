#include "wxscale/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"

namespace wxscale {

namespace {

[[noreturn]] void bad_config(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, "invalid model config: " + what);
}

std::size_t wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

class WeightStream {
 public:
  explicit WeightStream(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double symmetric(double bound) { return bound * (2.0 * unit() - 1.0); }

  std::vector<double> fill(std::size_t n, double bound) {
    std::vector<double> v(n);
    for (double& x : v) x = symmetric(bound);
    count_ += n;
    return v;
  }
  std::vector<double> gains(std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 1.0 + 0.1 * (2.0 * unit() - 1.0);
    count_ += n;
    return v;
  }
  std::vector<double> temperatures(std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 8.0 + 4.0 * unit();
    count_ += n;
    return v;
  }
  Dense dense(std::size_t out_dim, std::size_t in_dim) {
    Dense d;
    d.out_dim = out_dim;
    d.in_dim = in_dim;
    d.weight = fill(out_dim * in_dim, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    d.bias = fill(out_dim, 0.1);
    return d;
  }
  std::size_t count() const { return count_; }

 private:
  std::mt19937_64 engine_;
  std::size_t count_ = 0;
};

}  // namespace

PatchTensor cyclic_shift(const PatchTensor& input, Shift2 shift) {
  const auto rows = static_cast<long long>(input.rows());
  const auto cols = static_cast<long long>(input.cols());
  if (std::llabs(shift.rows) >= rows || std::llabs(shift.cols) >= cols) {
    throw Error(ErrorCode::kInvalidArgument,
                "shift (" + std::to_string(shift.rows) + ", " + std::to_string(shift.cols) +
                    ") out of range for a " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " patch grid");
  }
  if (shift.rows == 0 && shift.cols == 0) return input;
  PatchTensor out(input.rows(), input.cols(), input.dim());
  for (std::size_t i = 0; i < input.rows(); ++i) {
    const std::size_t di = wrap(static_cast<long long>(i) + shift.rows, input.rows());
    for (std::size_t j = 0; j < input.cols(); ++j) {
      const std::size_t dj = wrap(static_cast<long long>(j) + shift.cols, input.cols());
      std::ranges::copy(input.token(i, j), out.token(di, dj).begin());
    }
  }
  return out;
}

std::size_t SwinConfig::hidden_dim() const {
  const auto h = std::llround(mlp_ratio * static_cast<double>(embed_dim));
  return static_cast<std::size_t>(std::max<long long>(1, h));
}

Shift2 SwinConfig::block_shift(std::size_t block) const {
  if (!shifted || block % 2 == 0) return {};
  return {static_cast<int>(window_h / 2), static_cast<int>(window_w / 2)};
}

void SwinConfig::validate(std::size_t n_lat, std::size_t n_lon) const {
  if (patch_h == 0 || patch_w == 0) bad_config("patch size must be positive");
  if (embed_dim == 0 || heads == 0) bad_config("embed_dim and heads must be positive");
  if (window_h == 0 || window_w == 0) bad_config("window must be positive");
  if (!(mlp_ratio > 0.0) || !std::isfinite(mlp_ratio)) bad_config("mlp_ratio must be positive");
  if (embed_dim % heads != 0) bad_config("embed_dim is not divisible by heads");
  if (n_lat % patch_h != 0) bad_config("patch_h does not divide the latitude count");
  if (n_lon % patch_w != 0) bad_config("patch_w does not divide the longitude count");
  const std::size_t hp = n_lat / patch_h;
  const std::size_t wp = n_lon / patch_w;
  if (hp % window_h != 0) bad_config("window_h does not divide the patch rows");
  if (wp % window_w != 0) bad_config("window_w does not divide the patch columns");
}

nlohmann::ordered_json to_json(const SwinConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = "swin";
  j["patch"] = {cfg.patch_h, cfg.patch_w};
  j["embed_dim"] = cfg.embed_dim;
  j["depth"] = cfg.depth;
  j["heads"] = cfg.heads;
  j["window"] = {cfg.window_h, cfg.window_w};
  j["mlp_ratio"] = cfg.mlp_ratio;
  j["seed"] = cfg.seed;
  j["shifted"] = cfg.shifted;
  return j;
}

SwinConfig swin_config_from_json(const nlohmann::json& j) {
  SwinConfig cfg;
  try {
    if (j.contains("patch")) {
      cfg.patch_h = j.at("patch").at(0).get<std::size_t>();
      cfg.patch_w = j.at("patch").at(1).get<std::size_t>();
    }
    if (j.contains("window")) {
      cfg.window_h = j.at("window").at(0).get<std::size_t>();
      cfg.window_w = j.at("window").at(1).get<std::size_t>();
    }
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.depth = j.value("depth", cfg.depth);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.shifted = j.value("shifted", cfg.shifted);
  } catch (const nlohmann::json::exception& e) {
    bad_config(e.what());
  }
  return cfg;
}

void Dense::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* row = weight.data() + o * in_dim;
    double acc = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

SwinWeights SwinWeights::generate(const SwinConfig& cfg, std::size_t in_channels,
                                  std::size_t out_channels) {
  WeightStream rng(cfg.seed);
  const std::size_t e = cfg.embed_dim;
  const std::size_t hidden = cfg.hidden_dim();
  const std::size_t patch_area = cfg.patch_h * cfg.patch_w;
  const std::size_t bias_table = (2 * cfg.window_h - 1) * (2 * cfg.window_w - 1);

  SwinWeights w;
  w.embed = rng.dense(e, in_channels * patch_area);
  w.blocks.reserve(cfg.depth);
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    SwinBlockWeights blk;
    blk.norm1 = rng.gains(e);
    blk.query = rng.dense(e, e);
    blk.key = rng.dense(e, e);
    blk.value = rng.dense(e, e);
    blk.temperature = rng.temperatures(cfg.heads);
    blk.relative_bias = rng.fill(cfg.heads * bias_table, 0.5);
    blk.proj = rng.dense(e, e);
    blk.norm2 = rng.gains(e);
    blk.fc1 = rng.dense(hidden, e);
    blk.fc2 = rng.dense(e, hidden);
    w.blocks.push_back(std::move(blk));
  }
  w.head = rng.dense(out_channels * patch_area, e);
  w.scalar_count = rng.count();
  return w;
}

namespace swin {

void rms_norm(std::span<const double> x, std::span<const double> gain, std::span<double> out) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEpsilon);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

void gather_patch(const FieldState& state, const SwinConfig& cfg, std::size_t pi, std::size_t pj,
                  std::span<double> out) {
  const std::size_t nc = state.schema().total();
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t dy = 0; dy < cfg.patch_h; ++dy) {
      for (std::size_t dx = 0; dx < cfg.patch_w; ++dx) {
        out[(c * cfg.patch_h + dy) * cfg.patch_w + dx] =
            state.at(c, pi * cfg.patch_h + dy, pj * cfg.patch_w + dx);
      }
    }
  }
}

void scatter_patch(std::span<const double> patch, const ChannelSchema& schema,
                   const GridSpec& grid, const SwinConfig& cfg, std::size_t pi, std::size_t pj,
                   std::span<double> values) {
  const std::size_t n_lat = grid.n_lat();
  const std::size_t n_lon = grid.n_lon();
  std::size_t cf = 0;
  for (std::size_t c = 0; c < schema.total(); ++c) {
    if (!schema[c].forecast()) continue;
    for (std::size_t dy = 0; dy < cfg.patch_h; ++dy) {
      for (std::size_t dx = 0; dx < cfg.patch_w; ++dx) {
        const std::size_t lat = pi * cfg.patch_h + dy;
        const std::size_t lon = pj * cfg.patch_w + dx;
        values[(c * n_lat + lat) * n_lon + lon] = patch[(cf * cfg.patch_h + dy) * cfg.patch_w + dx];
      }
    }
    ++cf;
  }
}

PatchTensor window_attention(const SwinBlockWeights& w, const SwinConfig& cfg,
                             const PatchTensor& input, std::span<const int> groups,
                             std::size_t windows_r, std::size_t windows_c, std::size_t head_begin,
                             std::size_t head_end, bool add_bias) {
  const std::size_t e = cfg.embed_dim;
  const std::size_t d = cfg.head_dim();
  const std::size_t wh = cfg.window_h;
  const std::size_t ww = cfg.window_w;
  const std::size_t n = wh * ww;
  const std::size_t table_w = 2 * ww - 1;
  const std::size_t table = (2 * wh - 1) * table_w;
  if (input.dim() != e || groups.size() != input.rows() * input.cols() ||
      windows_r * wh > input.rows() || windows_c * ww > input.cols() || head_begin >= head_end ||
      head_end > cfg.heads) {
    throw Error(ErrorCode::kInvalidArgument, "window_attention: inconsistent arguments");
  }
  const std::size_t lo = head_begin * d;
  const std::size_t hi = head_end * d;
  const std::size_t width = hi - lo;

  PatchTensor out(input.rows(), input.cols(), e);
  std::vector<double> q(n * width), k(n * width), v(n * width), o(n * width);
  std::vector<double> logits(n);
  std::vector<std::size_t> row(n), col(n);

  auto project = [&](const Dense& dense, std::span<const double> x, double* dst) {
    for (std::size_t r = lo; r < hi; ++r) {
      const double* wr = dense.weight.data() + r * dense.in_dim;
      double acc = dense.bias[r];
      for (std::size_t i = 0; i < e; ++i) acc += wr[i] * x[i];
      dst[r - lo] = acc;
    }
  };
  auto normalize_heads = [&](double* x) {
    for (std::size_t h = 0; h < head_end - head_begin; ++h) {
      double ss = 0.0;
      for (std::size_t t = 0; t < d; ++t) ss += x[h * d + t] * x[h * d + t];
      const double inv = 1.0 / std::max(std::sqrt(ss), 1e-12);
      for (std::size_t t = 0; t < d; ++t) x[h * d + t] *= inv;
    }
  };

  for (std::size_t a = 0; a < windows_r; ++a) {
    for (std::size_t b = 0; b < windows_c; ++b) {
      for (std::size_t t = 0; t < n; ++t) {
        row[t] = a * wh + t / ww;
        col[t] = b * ww + t % ww;
        const auto x = input.token(row[t], col[t]);
        project(w.query, x, q.data() + t * width);
        project(w.key, x, k.data() + t * width);
        project(w.value, x, v.data() + t * width);
        normalize_heads(q.data() + t * width);
        normalize_heads(k.data() + t * width);
      }
      std::fill(o.begin(), o.end(), 0.0);
      for (std::size_t h = head_begin; h < head_end; ++h) {
        const std::size_t off = (h - head_begin) * d;
        const double tau = w.temperature[h];
        const double* bias = w.relative_bias.data() + h * table;
        for (std::size_t t = 0; t < n; ++t) {
          const int gt = groups[row[t] * input.cols() + col[t]];
          double max_logit = -std::numeric_limits<double>::infinity();
          for (std::size_t u = 0; u < n; ++u) {
            if (groups[row[u] * input.cols() + col[u]] != gt) {
              logits[u] = -std::numeric_limits<double>::infinity();
              continue;
            }
            double dot = 0.0;
            for (std::size_t s = 0; s < d; ++s) dot += q[t * width + off + s] * k[u * width + off + s];
            const std::size_t dy = t / ww + wh - 1 - u / ww;
            const std::size_t dx = t % ww + ww - 1 - u % ww;
            logits[u] = tau * dot + bias[dy * table_w + dx];
            max_logit = std::max(max_logit, logits[u]);
          }
          double z = 0.0;
          for (std::size_t u = 0; u < n; ++u) {
            logits[u] = std::isinf(logits[u]) ? 0.0 : std::exp(logits[u] - max_logit);
            z += logits[u];
          }
          for (std::size_t u = 0; u < n; ++u) {
            if (logits[u] == 0.0) continue;
            const double p = logits[u] / z;
            for (std::size_t s = 0; s < d; ++s) o[t * width + off + s] += p * v[u * width + off + s];
          }
        }
      }
      for (std::size_t t = 0; t < n; ++t) {
        auto dst = out.token(row[t], col[t]);
        for (std::size_t r = 0; r < e; ++r) {
          const double* wr = w.proj.weight.data() + r * e + lo;
          double acc = add_bias ? w.proj.bias[r] : 0.0;
          for (std::size_t s = 0; s < width; ++s) acc += wr[s] * o[t * width + s];
          dst[r] = acc;
        }
      }
    }
  }
  return out;
}

void mlp_partial(const SwinBlockWeights& w, std::span<const double> x, std::size_t hidden_begin,
                 std::size_t hidden_end, bool add_bias, std::span<double> out) {
  const std::size_t e = w.fc2.out_dim;
  const std::size_t hidden = w.fc1.out_dim;
  for (std::size_t r = 0; r < e; ++r) out[r] = add_bias ? w.fc2.bias[r] : 0.0;
  for (std::size_t h = hidden_begin; h < hidden_end; ++h) {
    const double* wr = w.fc1.weight.data() + h * w.fc1.in_dim;
    double z = w.fc1.bias[h];
    for (std::size_t i = 0; i < w.fc1.in_dim; ++i) z += wr[i] * x[i];
    const double g = gelu(z);
    for (std::size_t r = 0; r < e; ++r) out[r] += w.fc2.weight[r * hidden + h] * g;
  }
}

std::vector<int> seam_groups(std::size_t rows, std::size_t cols, std::size_t global_row0,
                             std::size_t total_rows, int shift_rows) {
  std::vector<int> g(rows * cols, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const long long src = static_cast<long long>(global_row0 + i) + shift_rows;
    const int group = src >= static_cast<long long>(total_rows) ? 1 : 0;
    std::fill_n(g.begin() + static_cast<std::ptrdiff_t>(i * cols), cols, group);
  }
  return g;
}

}  // namespace swin

SwinForecaster::SwinForecaster(SwinConfig cfg, const ChannelSchema& schema, const GridSpec& grid)
    : cfg_(cfg), schema_(schema), grid_(grid) {
  cfg_.validate(grid_.n_lat(), grid_.n_lon());
  patch_rows_ = grid_.n_lat() / cfg_.patch_h;
  patch_cols_ = grid_.n_lon() / cfg_.patch_w;
  weights_ = SwinWeights::generate(cfg_, schema_.total(), schema_.forecast_count());
}

void SwinForecaster::check_input(const FieldState& state) const {
  if (!(state.schema() == schema_) || !(state.grid() == grid_)) {
    throw Error(ErrorCode::kSchemaMismatch, "input field does not match the model's schema/grid");
  }
}

PatchTensor SwinForecaster::embed(const FieldState& state) const {
  check_input(state);
  PatchTensor x(patch_rows_, patch_cols_, cfg_.embed_dim);
  std::vector<double> patch(weights_.embed.in_dim);
  for (std::size_t i = 0; i < patch_rows_; ++i) {
    for (std::size_t j = 0; j < patch_cols_; ++j) {
      swin::gather_patch(state, cfg_, i, j, patch);
      weights_.embed.apply(patch, x.token(i, j));
    }
  }
  return x;
}

PatchTensor SwinForecaster::apply_block(std::size_t index, const PatchTensor& x) const {
  const auto& w = weights_.blocks.at(index);
  const Shift2 s = cfg_.block_shift(index);
  PatchTensor normed(x.rows(), x.cols(), x.dim());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) swin::rms_norm(x.token(i, j), w.norm1, normed.token(i, j));
  }
  if (s.rows != 0 || s.cols != 0) normed = cyclic_shift(normed, {-s.rows, -s.cols});
  const auto groups = swin::seam_groups(x.rows(), x.cols(), 0, x.rows(), s.rows);
  PatchTensor attn = swin::window_attention(w, cfg_, normed, groups, x.rows() / cfg_.window_h,
                                            x.cols() / cfg_.window_w, 0, cfg_.heads, true);
  if (s.rows != 0 || s.cols != 0) attn = cyclic_shift(attn, s);

  PatchTensor out = x;
  auto od = out.data();
  const auto ad = attn.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += ad[i];

  std::vector<double> n2(x.dim()), m(x.dim());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      auto tok = out.token(i, j);
      swin::rms_norm(tok, w.norm2, n2);
      swin::mlp_partial(w, n2, 0, cfg_.hidden_dim(), true, m);
      for (std::size_t r = 0; r < tok.size(); ++r) tok[r] += m[r];
    }
  }
  return out;
}

FieldState SwinForecaster::unembed(const PatchTensor& latent, const FieldState& input) const {
  std::vector<double> values(input.values().begin(), input.values().end());
  std::vector<double> patch(weights_.head.out_dim);
  for (std::size_t i = 0; i < patch_rows_; ++i) {
    for (std::size_t j = 0; j < patch_cols_; ++j) {
      weights_.head.apply(latent.token(i, j), patch);
      swin::scatter_patch(patch, schema_, grid_, cfg_, i, j, values);
    }
  }
  return input.with_values(std::move(values), input.timestamp() + kStepHours);
}

FieldState SwinForecaster::step(const FieldState& state) const {
  PatchTensor x = embed(state);
  for (std::size_t b = 0; b < cfg_.depth; ++b) x = apply_block(b, x);
  return unembed(x, state);
}

nlohmann::ordered_json SwinForecaster::describe() const {
  auto j = to_json(cfg_);
  j["param_count"] = param_count();
  return j;
}

LinearSurrogate::LinearSurrogate(double rho, std::vector<double> drift)
    : rho_(rho), drift_(std::move(drift)) {
  if (!(rho_ > 0.0 && rho_ <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "linear surrogate needs rho in (0, 1]");
  }
  for (double d : drift_) {
    if (!std::isfinite(d)) throw Error(ErrorCode::kInvalidArgument, "non-finite drift");
  }
}

FieldState LinearSurrogate::step(const FieldState& state) const {
  const auto& schema = state.schema();
  if (drift_.size() != schema.forecast_count()) {
    throw Error(ErrorCode::kSchemaMismatch, "drift has " + std::to_string(drift_.size()) +
                                                " entries for " +
                                                std::to_string(schema.forecast_count()) +
                                                " forecast channels");
  }
  const std::size_t np = state.grid().points();
  std::vector<double> out(state.values().begin(), state.values().end());
  std::size_t cf = 0;
  for (std::size_t c = 0; c < schema.total(); ++c) {
    if (!schema[c].forecast()) continue;
    for (std::size_t i = 0; i < np; ++i) {
      auto& v = out[c * np + i];
      v = rho_ * v + drift_[cf];
    }
    ++cf;
  }
  return state.with_values(std::move(out), state.timestamp() + kStepHours);
}

nlohmann::ordered_json LinearSurrogate::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = "linear";
  j["rho"] = rho_;
  j["drift"] = drift_;
  j["param_count"] = param_count();
  return j;
}

std::unique_ptr<OneStepModel> linear_surrogate(double rho, std::vector<double> drift) {
  return std::make_unique<LinearSurrogate>(rho, std::move(drift));
}

FieldState PeriodicAdvection::step(const FieldState& state) const {
  const auto& schema = state.schema();
  const std::size_t n_lat = state.grid().n_lat();
  const std::size_t n_lon = state.grid().n_lon();
  std::vector<double> out(state.values().begin(), state.values().end());
  const auto in = state.values();
  for (std::size_t c = 0; c < schema.total(); ++c) {
    if (!schema[c].forecast()) continue;
    for (std::size_t j = 0; j < n_lat; ++j) {
      const std::size_t base = (c * n_lat + j) * n_lon;
      for (std::size_t k = 0; k < n_lon; ++k) {
        out[base + wrap(static_cast<long long>(k) + cells_, n_lon)] = in[base + k];
      }
    }
  }
  return state.with_values(std::move(out), state.timestamp() + kStepHours);
}

nlohmann::ordered_json PeriodicAdvection::describe() const {
  nlohmann::ordered_json j;
  j["kind"] = "advect";
  j["cells_per_step"] = cells_;
  j["param_count"] = 0;
  return j;
}

FieldState NormalizedModel::step(const FieldState& state) const {
  return denormalize(inner_->step(normalize(state, stats_)), stats_);
}

nlohmann::ordered_json NormalizedModel::describe() const {
  auto j = inner_->describe();
  j["normalized"] = true;
  return j;
}

std::unique_ptr<OneStepModel> model_from_json(const nlohmann::json& j, const ChannelSchema& schema,
                                              const GridSpec& grid) {
  const std::string kind = j.value("kind", "");
  try {
    if (kind == "swin") return std::make_unique<SwinForecaster>(swin_config_from_json(j), schema, grid);
    if (kind == "identity") {
      return linear_surrogate(1.0, std::vector<double>(schema.forecast_count(), 0.0));
    }
    if (kind == "linear") {
      const double rho = j.value("rho", 1.0);
      std::vector<double> drift(schema.forecast_count(), 0.0);
      if (j.contains("drift")) {
        const auto& d = j.at("drift");
        if (d.is_number()) {
          std::fill(drift.begin(), drift.end(), d.get<double>());
        } else {
          drift = d.get<std::vector<double>>();
        }
      }
      return linear_surrogate(rho, std::move(drift));
    }
    if (kind == "advect") return std::make_unique<PeriodicAdvection>(j.value("cells_per_step", 1));
  } catch (const nlohmann::json::exception& e) {
    bad_config(e.what());
  }
  bad_config("unknown model kind '" + kind + "'");
}

double activation_footprint(const SwinConfig& cfg, std::size_t patch_rows, std::size_t patch_cols,
                            std::size_t batch, const DecompLayout& layout, double kappa_act) {
  if (layout.sp1 == 0 || layout.sp2 == 0) {
    throw Error(ErrorCode::kDecomposition, "layout needs positive sp1 and sp2");
  }
  const std::size_t local_rows = (patch_rows + layout.sp1 - 1) / layout.sp1;
  const std::size_t local_cols = (patch_cols + layout.sp2 - 1) / layout.sp2;
  return static_cast<double>(batch * local_rows * local_cols * cfg.embed_dim * cfg.depth) *
         kappa_act;
}

}  // namespace wxscale
