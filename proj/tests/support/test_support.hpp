#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wxscale/grid.hpp"

namespace wxtest {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("wxscale-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<const wxscale::ChannelSchema> schema_of(const std::vector<std::string>& names) {
  const auto canonical = wxscale::canonical_schema();
  std::vector<wxscale::ChannelInfo> entries;
  for (const auto& n : names) entries.push_back(canonical[*canonical.index_of(n)]);
  return std::make_shared<const wxscale::ChannelSchema>(std::move(entries));
}

inline std::shared_ptr<const wxscale::GridSpec> grid_of(std::size_t n_lat, std::size_t n_lon) {
  return std::make_shared<const wxscale::GridSpec>(wxscale::GridSpec::cell_centered(n_lat, n_lon));
}

inline wxscale::FieldState random_state(std::shared_ptr<const wxscale::ChannelSchema> schema,
                                        std::shared_ptr<const wxscale::GridSpec> grid,
                                        std::uint64_t seed, std::int64_t timestamp = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(schema->total() * grid->points());
  for (double& x : v) x = u(rng);
  return wxscale::FieldState(std::move(schema), std::move(grid), std::move(v), timestamp);
}

inline wxscale::FieldState constant_state(std::shared_ptr<const wxscale::ChannelSchema> schema,
                                          std::shared_ptr<const wxscale::GridSpec> grid,
                                          double value, std::int64_t timestamp = 0) {
  std::vector<double> v(schema->total() * grid->points(), value);
  return wxscale::FieldState(std::move(schema), std::move(grid), std::move(v), timestamp);
}

}  // namespace wxtest
