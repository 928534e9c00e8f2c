#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "wxscale/forecaster.hpp"
#include "wxscale/grid.hpp"
#include "wxscale/metrics.hpp"

namespace wxscale {

struct RolloutConfig {
  int ic_stride_hours = 12;
  int max_lead_hours = 240;
  int step_hours = static_cast<int>(kStepHours);
  std::string run_id = "run";
  /// Cap on the number of ICs taken from the start of the window (0 = all).
  std::size_t max_ics = 0;
  /// Worker threads over ICs; results do not depend on this.
  std::size_t workers = 1;
  /// Throw DivergedRolloutError instead of recording the IC as diverged.
  bool abort_on_divergence = false;

  /// Throws kConfig unless step divides stride and max lead.
  void validate() const;
  std::vector<int> leads() const;
};

nlohmann::ordered_json to_json(const RolloutConfig& cfg);

/// Read-only access to truth snapshots. Implementations must be safe for
/// concurrent readers.
class TruthSource {
 public:
  virtual ~TruthSource() = default;
  /// Throws MissingDataError when `timestamp` is not available.
  virtual const FieldState& state_at(std::int64_t timestamp) const = 0;
  /// Available timestamps, ascending.
  virtual std::vector<std::int64_t> timestamps() const = 0;
  /// CRC-32 over the float32 payload checksums in timestamp order.
  virtual std::uint32_t checksum() const = 0;
};

class MemoryTruth : public TruthSource {
 public:
  explicit MemoryTruth(std::vector<FieldState> states);

  const FieldState& state_at(std::int64_t timestamp) const override;
  std::vector<std::int64_t> timestamps() const override;
  std::uint32_t checksum() const override;
  std::span<const FieldState> states() const { return states_; }

 private:
  std::vector<FieldState> states_;
  std::map<std::int64_t, std::size_t> index_;
};

/// Truth directory: `index.json` listing field files written by write_field.
class DirectoryTruth : public TruthSource {
 public:
  explicit DirectoryTruth(const std::filesystem::path& dir);

  const FieldState& state_at(std::int64_t timestamp) const override { return memory_.state_at(timestamp); }
  std::vector<std::int64_t> timestamps() const override { return memory_.timestamps(); }
  std::uint32_t checksum() const override { return checksum_; }

 private:
  // Declared first: the loader fills it while memory_ is being constructed.
  std::uint32_t checksum_;
  MemoryTruth memory_;
};

/// Writes every state plus index.json into `dir` (created if needed).
void write_truth_dir(const std::filesystem::path& dir, std::span<const FieldState> states);

struct DivergedIc {
  std::int64_t ic_timestamp = 0;
  int first_bad_lead = 0;
  bool operator==(const DivergedIc&) const = default;
};

struct RolloutResult {
  /// Sorted by (ic, lead, schema channel order) with the pooled record last.
  std::vector<MetricRecord> records;
  std::vector<std::int64_t> evaluated_ics;
  /// ICs whose final lead lies beyond the truth window.
  std::vector<std::int64_t> dropped_ics;
  /// ICs aborted after a non-finite state; their later leads have no records.
  std::vector<DivergedIc> diverged;
};

/**
 * Runs the model autoregressively from every IC in the truth window.
 *
 * ICs start at the first truth timestamp and repeat every ic_stride_hours.
 * Each emits, per lead, the area-weighted RMSE of every forecast channel and
 * the pooled RMSE against truth at ic + lead.
 */
RolloutResult run_rollout(const OneStepModel& model, const TruthSource& truth,
                          const RolloutConfig& cfg);

struct LeadChannelMean {
  int lead_hours = 0;
  std::string channel;
  double mean_rmse = 0.0;
  std::size_t count = 0;
  bool operator==(const LeadChannelMean&) const = default;
};

/// Mean RMSE across ICs per (lead, channel), sorted by lead then channel name.
std::vector<LeadChannelMean> reduce_over_ics(std::span<const MetricRecord> records);

/// Count-weighted merge of two partial reductions.
std::vector<LeadChannelMean> merge_reductions(std::span<const LeadChannelMean> a,
                                              std::span<const LeadChannelMean> b);

nlohmann::ordered_json rollout_manifest(const RolloutConfig& cfg, const OneStepModel& model,
                                        const TruthSource& truth, const RolloutResult& result);

}  // namespace wxscale
