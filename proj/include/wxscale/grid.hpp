#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wxscale {

/**
 * Regular latitude-longitude grid. Longitude is always periodic.
 *
 * Latitudes are strictly monotone (either direction) and lie in [-90, 90].
 * Longitudes start anywhere in [0, 360) and are spaced exactly 360 / n_lon.
 */
class GridSpec {
 public:
  static GridSpec from_values(std::vector<double> lat_values, std::vector<double> lon_values);

  /// Node-centred grid from 90 down to -90 inclusive; pole rows are present.
  static GridSpec regular(std::size_t n_lat, std::size_t n_lon);

  /// Cell-centred grid, north to south, no pole rows.
  static GridSpec cell_centered(std::size_t n_lat, std::size_t n_lon);

  std::size_t n_lat() const { return lat_.size(); }
  std::size_t n_lon() const { return lon_.size(); }
  std::size_t points() const { return lat_.size() * lon_.size(); }
  std::span<const double> lat_values() const { return lat_; }
  std::span<const double> lon_values() const { return lon_; }
  bool periodic_lon() const { return true; }
  bool lat_descending() const { return lat_.front() > lat_.back(); }

  bool operator==(const GridSpec&) const = default;

 private:
  GridSpec(std::vector<double> lat, std::vector<double> lon)
      : lat_(std::move(lat)), lon_(std::move(lon)) {}

  std::vector<double> lat_;
  std::vector<double> lon_;
};

/// Per-row weights proportional to cos(latitude), clamped at zero and
/// normalised to mean one. Accepts any latitude list (no monotonicity check).
std::vector<double> latitude_weights(std::span<const double> lat_degrees);
std::vector<double> latitude_weights(const GridSpec& grid);

enum class ChannelKind { kSurface, kPressureLevel, kStatic };

std::string_view to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(std::string_view s);

struct ChannelInfo {
  std::string name;
  std::string unit;
  ChannelKind kind = ChannelKind::kSurface;
  std::optional<int> level_hpa;

  /// Static channels (masks, orography) are model inputs only.
  bool forecast() const { return kind != ChannelKind::kStatic; }

  bool operator==(const ChannelInfo&) const = default;
};

inline constexpr std::array<int, 13> kPressureLevelsHpa = {50,  100, 150, 200, 250, 300, 400,
                                                           500, 600, 700, 850, 925, 1000};

class ChannelSchema {
 public:
  explicit ChannelSchema(std::vector<ChannelInfo> entries);

  std::size_t total() const { return entries_.size(); }
  std::size_t forecast_count() const { return forecast_count_; }
  std::span<const ChannelInfo> entries() const { return entries_; }
  const ChannelInfo& operator[](std::size_t i) const { return entries_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const ChannelSchema& other) const { return entries_ == other.entries_; }

 private:
  std::vector<ChannelInfo> entries_;
  std::size_t forecast_count_ = 0;
};

/// The 71 forecast channels: six surface fields, then u, v, z, t, q at the
/// thirteen pressure levels (variable-major, level ascending in hPa).
ChannelSchema canonical_schema();

/// Appends land-sea mask, orography and cos-latitude as static channels.
ChannelSchema with_static_channels(const ChannelSchema& schema);

/// Unit of a canonical channel name (surface or `<var><level>`), if known.
std::optional<std::string> canonical_unit(std::string_view channel_name);

/// One atmospheric snapshot stored channel-major, then latitude, then longitude.
class FieldState {
 public:
  FieldState(std::shared_ptr<const ChannelSchema> schema, std::shared_ptr<const GridSpec> grid,
             std::vector<double> values, std::int64_t timestamp);

  const ChannelSchema& schema() const { return *schema_; }
  const GridSpec& grid() const { return *grid_; }
  const std::shared_ptr<const ChannelSchema>& schema_ptr() const { return schema_; }
  const std::shared_ptr<const GridSpec>& grid_ptr() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> channel(std::size_t c) const;
  double at(std::size_t c, std::size_t lat, std::size_t lon) const {
    return values_[(c * grid_->n_lat() + lat) * grid_->n_lon() + lon];
  }
  std::int64_t timestamp() const { return timestamp_; }

  /// Same schema and grid (by value).
  bool same_layout(const FieldState& other) const;

  /// New state sharing schema and grid.
  FieldState with_values(std::vector<double> values, std::int64_t timestamp) const;

 private:
  std::shared_ptr<const ChannelSchema> schema_;
  std::shared_ptr<const GridSpec> grid_;
  std::vector<double> values_;
  std::int64_t timestamp_;
};

/// Throws kSchemaMismatch unless both states share schema and grid.
void require_same_layout(const FieldState& a, const FieldState& b);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Population statistics per channel over every state and grid point.
  static NormStats from_states(std::span<const FieldState> states);
};

FieldState normalize(const FieldState& state, const NormStats& stats);
FieldState denormalize(const FieldState& state, const NormStats& stats);

// Field files: `<stem>.json` header plus `<stem>.bin` payload of
// little-endian float32 in channel, latitude, longitude order.

std::string field_header_json(const FieldState& state, std::uint32_t payload_crc32);
std::vector<unsigned char> field_payload(const FieldState& state);

/// Writes `<stem>.json` and `<stem>.bin`; returns the payload CRC-32.
std::uint32_t write_field(const std::filesystem::path& stem, const FieldState& state);
FieldState read_field(const std::filesystem::path& stem);

/// Reads the payload CRC-32 recorded in a field header.
std::uint32_t field_checksum(const std::filesystem::path& stem);

}  // namespace wxscale
