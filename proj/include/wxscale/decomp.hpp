#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wxscale/forecaster.hpp"
#include "wxscale/layout.hpp"

namespace wxscale {

enum class CommKind { kHalo, kRoll, kAllreducePartial, kAllreduceGrad };

std::string_view to_string(CommKind kind);

/// Ranks are global ids: ((replica * sp1 * sp2) + spatial_rank) * tp + shard.
/// Halo and roll traffic is attributed to shard 0 of each spatial rank.
struct CommEvent {
  CommKind kind = CommKind::kHalo;
  std::size_t src_rank = 0;
  std::size_t dst_rank = 0;
  std::size_t element_count = 0;
  std::string tag;

  bool operator==(const CommEvent&) const = default;
};

struct CommTrace {
  std::vector<CommEvent> events;

  void append(const CommTrace& other);
  bool operator==(const CommTrace&) const = default;
};

/// One JSON object per line: kind, src, dst, elements, tag.
std::string to_jsonl(const CommTrace& trace);

struct CommVolume {
  std::size_t halo = 0;
  std::size_t roll = 0;
  std::size_t allreduce_partial = 0;
  std::size_t allreduce_grad = 0;

  std::size_t total() const { return halo + roll + allreduce_partial + allreduce_grad; }
  bool operator==(const CommVolume&) const = default;
};

CommVolume comm_volume(const CommTrace& trace);

/// In-process message channel with per-(src, dst) FIFO order. Every
/// inter-rank send is recorded; self-sends are rejected (callers copy locally).
class MessageBus {
 public:
  void send(CommKind kind, std::size_t src, std::size_t dst, std::vector<double> payload,
            std::string tag);
  std::vector<double> receive(std::size_t dst, std::size_t src);
  bool drained() const;
  const CommTrace& trace() const { return trace_; }
  CommTrace take_trace();

 private:
  std::map<std::pair<std::size_t, std::size_t>, std::deque<std::vector<double>>> queues_;
  CommTrace trace_;
};

/// Patch-grid rectangle owned by one spatial rank (rank = i_sp1 * sp2 + i_sp2).
struct Subdomain {
  std::size_t rank = 0;
  std::size_t sp1_index = 0;
  std::size_t sp2_index = 0;
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool operator==(const Subdomain&) const = default;
};

/// Tiles the patch grid into sp1 x sp2 rectangles of whole windows.
std::vector<Subdomain> partition(std::size_t patch_rows, std::size_t patch_cols,
                                 std::size_t window_h, std::size_t window_w,
                                 const DecompLayout& layout);

/// Rank-local tensor with a halo frame of halo_h rows and halo_w columns.
struct LocalTile {
  Subdomain domain;
  std::size_t halo_h = 0;
  std::size_t halo_w = 0;
  PatchTensor data;              // (rows + 2 halo_h) x (cols + 2 halo_w)
  std::vector<char> row_valid;   // per extended row; false for masked latitude halos

  std::span<double> interior(std::size_t i, std::size_t j) { return data.token(i + halo_h, j + halo_w); }
  std::span<const double> interior(std::size_t i, std::size_t j) const {
    return data.token(i + halo_h, j + halo_w);
  }
};

std::vector<LocalTile> scatter_tiles(const PatchTensor& global, std::span<const Subdomain> domains,
                                     std::size_t halo_h, std::size_t halo_w);
PatchTensor gather_tiles(std::span<const LocalTile> tiles, std::size_t patch_rows,
                         std::size_t patch_cols);

struct TileExchange {
  std::vector<LocalTile> tiles;
  CommTrace trace;
};

/**
 * Fills every tile's halo frame from its neighbours' interiors.
 *
 * Longitude halos wrap periodically (a single column of ranks wraps onto
 * itself without traffic). Latitude halos at the north and south edges are
 * zero-filled and flagged invalid. Longitude strips go first so corner cells
 * arrive with the latitude strips.
 */
TileExchange halo_exchange(std::vector<LocalTile> tiles, const DecompLayout& layout,
                           const std::string& tag = "halo");

/// Multi-rank equivalent of cyclic_shift on the gathered interiors.
TileExchange distributed_roll(const std::vector<LocalTile>& tiles, Shift2 shift,
                              const DecompLayout& layout, std::size_t patch_rows,
                              std::size_t patch_cols, const std::string& tag = "roll");

struct ShardedOutput {
  PatchTensor output;
  CommTrace trace;
};

/// Attention heads split over `tp` shards; partial projections are summed by a
/// simulated all-to-all AllReduce in shard order. `rank_base` is shard 0's id.
ShardedOutput sharded_attention(const SwinBlockWeights& w, const SwinConfig& cfg,
                                const PatchTensor& input, std::span<const int> groups,
                                std::size_t windows_r, std::size_t windows_c, std::size_t tp,
                                std::size_t rank_base = 0, const std::string& tag = "attn");

/// MLP hidden units split over `tp` shards, reduced like sharded_attention.
ShardedOutput sharded_mlp(const SwinBlockWeights& w, const SwinConfig& cfg,
                          const PatchTensor& normed, std::size_t tp, std::size_t rank_base = 0,
                          const std::string& tag = "mlp");

/// Gradient AllReduce accounting for one optimiser step: a ring over the dp
/// replicas, one event of `param_count` elements per replica, attributed to
/// each replica's first rank. Empty when dp == 1.
CommTrace gradient_allreduce_trace(const DecompLayout& layout, std::size_t param_count);

enum class ShiftStrategy {
  kRoll,  // distributed roll, local windows, roll back
  kHalo,  // half-window halos, windows straddling subdomain edges
};

std::string_view to_string(ShiftStrategy s);
ShiftStrategy shift_strategy_from_string(std::string_view s);

/// Max |a - b| over max |b|; zero when both are identically zero.
double max_relative_deviation(std::span<const double> a, std::span<const double> b);

/// Shifted-window forward pass executed over a simulated dp x sp1 x sp2 x tp layout.
class DecomposedSwin {
 public:
  DecomposedSwin(std::shared_ptr<const SwinForecaster> model, DecompLayout layout,
                 ShiftStrategy strategy = ShiftStrategy::kRoll);

  struct Result {
    FieldState output;
    CommTrace trace;
  };

  Result forward(const FieldState& state) const;

  const std::vector<Subdomain>& domains() const { return domains_; }
  const DecompLayout& layout() const { return layout_; }

 private:
  std::vector<PatchTensor> attention_block(std::size_t block, const std::vector<PatchTensor>& normed,
                                           CommTrace& trace) const;

  std::shared_ptr<const SwinForecaster> model_;
  DecompLayout layout_;
  ShiftStrategy strategy_;
  std::vector<Subdomain> domains_;
};

/// OneStepModel running the decomposed forward pass. With verification on,
/// every step is also run sequentially and the worst deviation is tracked.
class DecomposedSwinForecaster : public OneStepModel {
 public:
  DecomposedSwinForecaster(std::shared_ptr<const SwinForecaster> model, DecompLayout layout,
                           ShiftStrategy strategy, bool verify, double tolerance = 1e-10);

  FieldState step(const FieldState& state) const override;
  std::size_t param_count() const override { return model_->param_count(); }
  nlohmann::ordered_json describe() const override;

  double max_deviation() const;
  std::size_t steps() const;
  /// Trace of the first step (every step moves the same volumes).
  CommTrace first_step_trace() const;

 private:
  std::shared_ptr<const SwinForecaster> model_;
  DecomposedSwin engine_;
  bool verify_;
  double tolerance_;
  mutable std::mutex mutex_;
  mutable double max_deviation_ = 0.0;
  mutable std::size_t steps_ = 0;
  mutable CommTrace first_trace_;
};

}  // namespace wxscale
