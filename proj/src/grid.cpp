#include "wxscale/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"

namespace wxscale {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

[[noreturn]] void invalid_grid(const std::string& what) {
  throw Error(ErrorCode::kInvalidGrid, "invalid grid: " + what);
}

}  // namespace

GridSpec GridSpec::from_values(std::vector<double> lat, std::vector<double> lon) {
  if (lat.size() < 2) invalid_grid("need at least 2 latitude rows");
  if (lon.size() < 2) invalid_grid("need at least 2 longitude columns");
  for (double v : lat) {
    if (!std::isfinite(v) || std::abs(v) > 90.0) invalid_grid("latitude out of [-90, 90]");
  }
  const bool descending = lat[0] > lat[1];
  for (std::size_t j = 1; j < lat.size(); ++j) {
    const bool ok = descending ? lat[j] < lat[j - 1] : lat[j] > lat[j - 1];
    if (!ok) invalid_grid("latitudes not strictly monotone at row " + std::to_string(j));
  }
  const double step = 360.0 / static_cast<double>(lon.size());
  for (std::size_t k = 0; k < lon.size(); ++k) {
    if (!std::isfinite(lon[k]) || lon[k] < 0.0 || lon[k] >= 360.0) {
      invalid_grid("longitude out of [0, 360)");
    }
    const double expected = lon[0] + step * static_cast<double>(k);
    if (std::abs(lon[k] - expected) > 1e-9 * 360.0) {
      invalid_grid("longitudes not equally spaced with period 360");
    }
  }
  return GridSpec(std::move(lat), std::move(lon));
}

GridSpec GridSpec::regular(std::size_t n_lat, std::size_t n_lon) {
  if (n_lat < 2 || n_lon < 2) invalid_grid("need at least 2x2 points");
  std::vector<double> lat(n_lat), lon(n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    lat[j] = 90.0 - 180.0 * static_cast<double>(j) / static_cast<double>(n_lat - 1);
  }
  for (std::size_t k = 0; k < n_lon; ++k) {
    lon[k] = 360.0 * static_cast<double>(k) / static_cast<double>(n_lon);
  }
  return from_values(std::move(lat), std::move(lon));
}

GridSpec GridSpec::cell_centered(std::size_t n_lat, std::size_t n_lon) {
  if (n_lat < 2 || n_lon < 2) invalid_grid("need at least 2x2 points");
  std::vector<double> lat(n_lat), lon(n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    lat[j] = 90.0 - 180.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(n_lat);
  }
  for (std::size_t k = 0; k < n_lon; ++k) {
    lon[k] = 360.0 * static_cast<double>(k) / static_cast<double>(n_lon);
  }
  return from_values(std::move(lat), std::move(lon));
}

std::vector<double> latitude_weights(std::span<const double> lat_degrees) {
  if (lat_degrees.empty()) invalid_grid("no latitude rows");
  std::vector<double> w(lat_degrees.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double lat = lat_degrees[j];
    if (!std::isfinite(lat) || std::abs(lat) > 90.0) invalid_grid("latitude out of [-90, 90]");
    // cos(90 deg) evaluates to ~6e-17, not 0.
    w[j] = std::abs(lat) == 90.0 ? 0.0 : std::max(0.0, std::cos(lat * kDegToRad));
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(sum > 0.0)) invalid_grid("all latitude weights are zero");
  const double scale = static_cast<double>(w.size()) / sum;
  for (double& v : w) v *= scale;
  return w;
}

std::vector<double> latitude_weights(const GridSpec& grid) {
  return latitude_weights(grid.lat_values());
}

std::string_view to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::kSurface: return "surface";
    case ChannelKind::kPressureLevel: return "pressure-level";
    case ChannelKind::kStatic: return "static";
  }
  return "surface";
}

ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "surface") return ChannelKind::kSurface;
  if (s == "pressure-level") return ChannelKind::kPressureLevel;
  if (s == "static") return ChannelKind::kStatic;
  throw Error(ErrorCode::kInvalidArgument, "unknown channel kind '" + std::string(s) + "'");
}

ChannelSchema::ChannelSchema(std::vector<ChannelInfo> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty channel schema");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.name.empty() || e.name.find(',') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "invalid channel name '" + e.name + "'");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[j].name == e.name) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate channel name '" + e.name + "'");
      }
    }
    if (e.kind == ChannelKind::kPressureLevel) {
      if (!e.level_hpa || std::find(kPressureLevelsHpa.begin(), kPressureLevelsHpa.end(),
                                    *e.level_hpa) == kPressureLevelsHpa.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "pressure-level channel '" + e.name + "' needs a level from the standard list");
      }
    }
    if (e.forecast()) ++forecast_count_;
  }
  if (forecast_count_ == 0) throw Error(ErrorCode::kInvalidArgument, "schema has no forecast channel");
}

std::optional<std::size_t> ChannelSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

namespace {

struct VariableDef {
  const char* name;
  const char* unit;
};

constexpr VariableDef kSurface[] = {{"TCWV", "kg/m²"}, {"u10m", "m/s"}, {"v10m", "m/s"},
                                    {"t2m", "K"},      {"sp", "Pa"},    {"msl", "Pa"}};
constexpr VariableDef kLevelVars[] = {
    {"u", "m/s"}, {"v", "m/s"}, {"z", "m²/s²"}, {"t", "K"}, {"q", "kg/kg"}};

}  // namespace

ChannelSchema canonical_schema() {
  std::vector<ChannelInfo> entries;
  entries.reserve(71);
  for (const auto& s : kSurface) {
    entries.push_back({s.name, s.unit, ChannelKind::kSurface, std::nullopt});
  }
  for (const auto& v : kLevelVars) {
    for (int level : kPressureLevelsHpa) {
      entries.push_back(
          {std::string(v.name) + std::to_string(level), v.unit, ChannelKind::kPressureLevel, level});
    }
  }
  return ChannelSchema(std::move(entries));
}

ChannelSchema with_static_channels(const ChannelSchema& schema) {
  std::vector<ChannelInfo> entries(schema.entries().begin(), schema.entries().end());
  entries.push_back({"lsm", "1", ChannelKind::kStatic, std::nullopt});
  entries.push_back({"orography", "m", ChannelKind::kStatic, std::nullopt});
  entries.push_back({"cos_lat", "1", ChannelKind::kStatic, std::nullopt});
  return ChannelSchema(std::move(entries));
}

std::optional<std::string> canonical_unit(std::string_view channel_name) {
  static const ChannelSchema schema = canonical_schema();
  if (auto i = schema.index_of(channel_name)) return schema[*i].unit;
  return std::nullopt;
}

FieldState::FieldState(std::shared_ptr<const ChannelSchema> schema,
                       std::shared_ptr<const GridSpec> grid, std::vector<double> values,
                       std::int64_t timestamp)
    : schema_(std::move(schema)), grid_(std::move(grid)), values_(std::move(values)),
      timestamp_(timestamp) {
  if (!schema_ || !grid_) throw Error(ErrorCode::kInvalidArgument, "field needs schema and grid");
  const std::size_t expected = schema_->total() * grid_->points();
  if (values_.size() != expected) {
    throw Error(ErrorCode::kInvalidArgument, "field has " + std::to_string(values_.size()) +
                                                 " values, expected " + std::to_string(expected));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite,
                  "non-finite value in field at t=" + std::to_string(timestamp_));
    }
  }
}

std::span<const double> FieldState::channel(std::size_t c) const {
  const std::size_t n = grid_->points();
  return std::span<const double>(values_).subspan(c * n, n);
}

bool FieldState::same_layout(const FieldState& other) const {
  const bool schema_eq = schema_ == other.schema_ || *schema_ == *other.schema_;
  const bool grid_eq = grid_ == other.grid_ || *grid_ == *other.grid_;
  return schema_eq && grid_eq;
}

FieldState FieldState::with_values(std::vector<double> values, std::int64_t timestamp) const {
  return FieldState(schema_, grid_, std::move(values), timestamp);
}

void require_same_layout(const FieldState& a, const FieldState& b) {
  if (!a.same_layout(b)) {
    throw Error(ErrorCode::kSchemaMismatch, "fields differ in channel schema or grid");
  }
}

NormStats NormStats::from_states(std::span<const FieldState> states) {
  if (states.empty()) throw Error(ErrorCode::kInvalidArgument, "no states for normalisation");
  const auto& first = states.front();
  const std::size_t nc = first.schema().total();
  const std::size_t np = first.grid().points();
  NormStats stats{std::vector<double>(nc, 0.0), std::vector<double>(nc, 0.0)};
  const double count = static_cast<double>(np * states.size());
  for (const auto& s : states) require_same_layout(first, s);
  for (std::size_t c = 0; c < nc; ++c) {
    double sum = 0.0;
    for (const auto& s : states) {
      for (double v : s.channel(c)) sum += v;
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (const auto& s : states) {
      for (double v : s.channel(c)) ss += (v - mean) * (v - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(ss / count);
  }
  return stats;
}

namespace {

void check_stats(const FieldState& state, const NormStats& stats) {
  const std::size_t nc = state.schema().total();
  if (stats.mean.size() != nc || stats.stddev.size() != nc) {
    throw Error(ErrorCode::kSchemaMismatch, "normalisation stats do not match the channel schema");
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (!(stats.stddev[c] > 0.0) || !std::isfinite(stats.mean[c])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "non-positive std for channel '" + state.schema()[c].name + "'");
    }
  }
}

}  // namespace

FieldState normalize(const FieldState& state, const NormStats& stats) {
  check_stats(state, stats);
  const std::size_t np = state.grid().points();
  std::vector<double> out(state.values().begin(), state.values().end());
  for (std::size_t c = 0; c < state.schema().total(); ++c) {
    for (std::size_t i = 0; i < np; ++i) {
      auto& v = out[c * np + i];
      v = (v - stats.mean[c]) / stats.stddev[c];
    }
  }
  return state.with_values(std::move(out), state.timestamp());
}

FieldState denormalize(const FieldState& state, const NormStats& stats) {
  check_stats(state, stats);
  const std::size_t np = state.grid().points();
  std::vector<double> out(state.values().begin(), state.values().end());
  for (std::size_t c = 0; c < state.schema().total(); ++c) {
    for (std::size_t i = 0; i < np; ++i) {
      auto& v = out[c * np + i];
      v = v * stats.stddev[c] + stats.mean[c];
    }
  }
  return state.with_values(std::move(out), state.timestamp());
}

// ---------------------------------------------------------------------------
// Field files

namespace {

constexpr const char* kFieldFormat = "wxscale-field";
constexpr int kFieldVersion = 1;

nlohmann::ordered_json schema_to_json(const ChannelSchema& schema) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : schema.entries()) {
    nlohmann::ordered_json j;
    j["name"] = e.name;
    j["unit"] = e.unit;
    j["kind"] = std::string(to_string(e.kind));
    if (e.level_hpa) j["level_hpa"] = *e.level_hpa;
    arr.push_back(std::move(j));
  }
  return arr;
}

ChannelSchema schema_from_json(const nlohmann::json& arr) {
  std::vector<ChannelInfo> entries;
  for (const auto& j : arr) {
    ChannelInfo info;
    info.name = j.at("name").get<std::string>();
    info.unit = j.at("unit").get<std::string>();
    info.kind = channel_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("level_hpa")) info.level_hpa = j.at("level_hpa").get<int>();
    entries.push_back(std::move(info));
  }
  return ChannelSchema(std::move(entries));
}

}  // namespace

std::vector<unsigned char> field_payload(const FieldState& state) {
  const auto values = state.values();
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    bytes[4 * i + 0] = static_cast<unsigned char>(bits & 0xffu);
    bytes[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xffu);
    bytes[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xffu);
    bytes[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xffu);
  }
  return bytes;
}

std::string field_header_json(const FieldState& state, std::uint32_t payload_crc32) {
  nlohmann::ordered_json h;
  h["format"] = kFieldFormat;
  h["version"] = kFieldVersion;
  h["timestamp"] = state.timestamp();
  h["dtype"] = "float32";
  h["endianness"] = "little";
  h["layout"] = "channel,lat,lon";
  h["schema"] = schema_to_json(state.schema());
  nlohmann::ordered_json g;
  g["n_lat"] = state.grid().n_lat();
  g["n_lon"] = state.grid().n_lon();
  g["lat"] = std::vector<double>(state.grid().lat_values().begin(), state.grid().lat_values().end());
  g["lon"] = std::vector<double>(state.grid().lon_values().begin(), state.grid().lon_values().end());
  g["periodic_lon"] = true;
  h["grid"] = std::move(g);
  h["payload_bytes"] = state.values().size() * 4;
  h["payload_crc32"] = io::crc32_hex(payload_crc32);
  return h.dump(2) + "\n";
}

std::uint32_t write_field(const std::filesystem::path& stem, const FieldState& state) {
  const auto payload = field_payload(state);
  const auto crc = io::crc32(payload);
  auto bin = stem;
  bin += ".bin";
  auto json = stem;
  json += ".json";
  io::write_atomic(bin, payload);
  io::write_atomic(json, field_header_json(state, crc));
  return crc;
}

namespace {

nlohmann::json read_header(const std::filesystem::path& stem) {
  auto json = stem;
  json += ".json";
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(io::read_text(json));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, "malformed field header " + json.string() + ": " + e.what());
  }
  if (h.value("format", "") != kFieldFormat || h.value("version", 0) != kFieldVersion) {
    throw Error(ErrorCode::kIo, "unsupported field header " + json.string());
  }
  return h;
}

}  // namespace

std::uint32_t field_checksum(const std::filesystem::path& stem) {
  return io::parse_crc32_hex(read_header(stem).at("payload_crc32").get<std::string>());
}

FieldState read_field(const std::filesystem::path& stem) {
  const auto h = read_header(stem);
  try {
    if (h.at("dtype") != "float32" || h.at("endianness") != "little" ||
        h.at("layout") != "channel,lat,lon") {
      throw Error(ErrorCode::kIo, "unsupported field encoding in " + stem.string());
    }
    auto schema = std::make_shared<const ChannelSchema>(schema_from_json(h.at("schema")));
    auto grid = std::make_shared<const GridSpec>(
        GridSpec::from_values(h.at("grid").at("lat").get<std::vector<double>>(),
                              h.at("grid").at("lon").get<std::vector<double>>()));
    auto bin = stem;
    bin += ".bin";
    const auto bytes = io::read_bytes(bin);
    const std::size_t n = schema->total() * grid->points();
    if (bytes.size() != 4 * n) {
      throw Error(ErrorCode::kIo, "payload size mismatch in " + bin.string());
    }
    const auto expected = io::parse_crc32_hex(h.at("payload_crc32").get<std::string>());
    if (io::crc32(bytes) != expected) {
      throw Error(ErrorCode::kIo, "payload checksum mismatch in " + bin.string());
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                                 (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return FieldState(std::move(schema), std::move(grid), std::move(values),
                      h.at("timestamp").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, "malformed field header for " + stem.string() + ": " + e.what());
  }
}

}  // namespace wxscale
