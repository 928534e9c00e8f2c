#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace wxscale {

/// Hybrid data/spatial/tensor-parallel layout: dp x sp1 x sp2 x tp ranks.
/// sp1 splits latitude, sp2 splits longitude. Halo widths are in patches.
struct DecompLayout {
  std::size_t dp = 1;
  std::size_t sp1 = 1;
  std::size_t sp2 = 1;
  std::size_t tp = 1;
  std::size_t halo_h = 0;
  std::size_t halo_w = 0;

  std::size_t spatial_ranks() const { return sp1 * sp2; }
  std::size_t world_size() const { return dp * sp1 * sp2 * tp; }

  bool operator==(const DecompLayout&) const = default;
};

/// Parses "dp,sp1,sp2,tp" (halos left at zero).
DecompLayout parse_layout(std::string_view text);
std::string to_string(const DecompLayout& layout);

}  // namespace wxscale
