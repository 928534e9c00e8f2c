#include "wxscale/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"

namespace wxscale {

void RolloutConfig::validate() const {
  if (step_hours <= 0 || ic_stride_hours <= 0 || max_lead_hours <= 0) {
    throw Error(ErrorCode::kConfig, "rollout hours must be positive");
  }
  if (ic_stride_hours % step_hours != 0) {
    throw Error(ErrorCode::kConfig, "ic_stride_hours must be a multiple of step_hours");
  }
  if (max_lead_hours % step_hours != 0) {
    throw Error(ErrorCode::kConfig, "max_lead_hours must be a multiple of step_hours");
  }
  if (step_hours != kStepHours) {
    throw Error(ErrorCode::kConfig, "step_hours must equal the model step of 6 h");
  }
  if (workers == 0) throw Error(ErrorCode::kConfig, "workers must be at least 1");
  if (run_id.empty() || run_id.find(',') != std::string::npos) {
    throw Error(ErrorCode::kConfig, "run_id must be non-empty and comma-free");
  }
}

std::vector<int> RolloutConfig::leads() const {
  std::vector<int> out;
  for (int h = step_hours; h <= max_lead_hours; h += step_hours) out.push_back(h);
  return out;
}

nlohmann::ordered_json to_json(const RolloutConfig& cfg) {
  nlohmann::ordered_json j;
  j["run_id"] = cfg.run_id;
  j["ic_stride_hours"] = cfg.ic_stride_hours;
  j["max_lead_hours"] = cfg.max_lead_hours;
  j["step_hours"] = cfg.step_hours;
  j["max_ics"] = cfg.max_ics;
  j["abort_on_divergence"] = cfg.abort_on_divergence;
  return j;
}

MemoryTruth::MemoryTruth(std::vector<FieldState> states) : states_(std::move(states)) {
  if (states_.empty()) throw Error(ErrorCode::kMissingData, "truth source holds no states");
  std::ranges::sort(states_, {}, &FieldState::timestamp);
  for (std::size_t i = 0; i < states_.size(); ++i) {
    require_same_layout(states_.front(), states_[i]);
    if (!index_.emplace(states_[i].timestamp(), i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate truth timestamp " + std::to_string(states_[i].timestamp()));
    }
  }
}

const FieldState& MemoryTruth::state_at(std::int64_t timestamp) const {
  const auto it = index_.find(timestamp);
  if (it == index_.end()) {
    throw MissingDataError(timestamp, "truth has no state at t=" + std::to_string(timestamp) + " h");
  }
  return states_[it->second];
}

std::vector<std::int64_t> MemoryTruth::timestamps() const {
  std::vector<std::int64_t> out;
  out.reserve(index_.size());
  for (const auto& [t, i] : index_) out.push_back(t);
  return out;
}

namespace {

std::uint32_t combine_checksums(std::span<const std::uint32_t> crcs) {
  std::vector<unsigned char> bytes;
  bytes.reserve(crcs.size() * 4);
  for (auto c : crcs) {
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<unsigned char>((c >> (8 * k)) & 0xFFu));
  }
  return io::crc32(bytes);
}

std::string truth_stem(std::int64_t t) { return "t" + std::to_string(t); }

}  // namespace

std::uint32_t MemoryTruth::checksum() const {
  std::vector<std::uint32_t> crcs;
  for (const auto& s : states_) crcs.push_back(io::crc32(field_payload(s)));
  return combine_checksums(crcs);
}

namespace {

MemoryTruth load_truth_dir(const std::filesystem::path& dir, std::uint32_t& checksum) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(io::read_text(dir / "index.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, (dir / "index.json").string() + ": " + e.what());
  }
  std::vector<FieldState> states;
  std::vector<std::pair<std::int64_t, std::uint32_t>> crcs;
  try {
    if (index.at("format") != "wxscale-truth") {
      throw Error(ErrorCode::kIo, "index.json is not a truth index");
    }
    for (const auto& f : index.at("fields")) {
      const auto stem = dir / f.at("stem").get<std::string>();
      states.push_back(read_field(stem));
      crcs.emplace_back(states.back().timestamp(), field_checksum(stem));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, (dir / "index.json").string() + ": " + e.what());
  }
  std::ranges::sort(crcs);
  std::vector<std::uint32_t> ordered;
  for (const auto& [t, c] : crcs) ordered.push_back(c);
  checksum = combine_checksums(ordered);
  return MemoryTruth(std::move(states));
}

}  // namespace

DirectoryTruth::DirectoryTruth(const std::filesystem::path& dir)
    : memory_(load_truth_dir(dir, checksum_)) {}

void write_truth_dir(const std::filesystem::path& dir, std::span<const FieldState> states) {
  std::filesystem::create_directories(dir);
  std::vector<const FieldState*> sorted;
  for (const auto& s : states) sorted.push_back(&s);
  std::ranges::sort(sorted, {}, [](const FieldState* s) { return s->timestamp(); });
  nlohmann::ordered_json index;
  index["format"] = "wxscale-truth";
  index["version"] = 1;
  index["fields"] = nlohmann::ordered_json::array();
  for (const auto* s : sorted) {
    const auto stem = truth_stem(s->timestamp());
    const auto crc = write_field(dir / stem, *s);
    index["fields"].push_back({{"timestamp", s->timestamp()}, {"stem", stem}, {"payload_crc32", io::crc32_hex(crc)}});
  }
  io::write_atomic(dir / "index.json", index.dump(2) + "\n");
}

namespace {

struct IcOutcome {
  std::vector<MetricRecord> records;
  bool diverged = false;
  int first_bad_lead = 0;
};

IcOutcome roll_one(const OneStepModel& model, const TruthSource& truth, const RolloutConfig& cfg,
                   std::int64_t ic) {
  IcOutcome out;
  const auto& schema = truth.state_at(ic).schema();
  FieldState state = truth.state_at(ic);
  auto diverge = [&](int lead) {
    if (cfg.abort_on_divergence) throw DivergedRolloutError(ic, lead);
    out.diverged = true;
    out.first_bad_lead = lead;
  };
  for (int lead : cfg.leads()) {
    try {
      state = model.step(state);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      diverge(lead);
      return out;
    }
    if (state.timestamp() != ic + lead) {
      throw Error(ErrorCode::kInvalidArgument, "model step did not advance by 6 h");
    }
    const auto& target = truth.state_at(ic + lead);
    const auto rmse = area_weighted_rmse(state, target);
    const double pooled = pooled_rmse(state, target);
    // Finite states far from truth can still overflow the squared error.
    const bool finite = std::isfinite(pooled) && std::ranges::all_of(rmse, [](double r) { return std::isfinite(r); });
    if (!finite) {
      diverge(lead);
      return out;
    }
    for (std::size_t c = 0; c < schema.total(); ++c) {
      if (!schema[c].forecast()) continue;
      out.records.push_back({cfg.run_id, ic, lead, schema[c].name, rmse[c]});
    }
    out.records.push_back({cfg.run_id, ic, lead, std::string(kPooledChannel), pooled});
  }
  return out;
}

}  // namespace

RolloutResult run_rollout(const OneStepModel& model, const TruthSource& truth,
                          const RolloutConfig& cfg) {
  cfg.validate();
  const auto ts = truth.timestamps();
  if (ts.empty()) throw Error(ErrorCode::kMissingData, "truth source holds no states");
  const std::int64_t t0 = ts.front();
  const std::int64_t t_end = ts.back();

  RolloutResult result;
  std::vector<std::int64_t> ics;
  for (std::int64_t ic = t0; ic <= t_end; ic += cfg.ic_stride_hours) {
    if (ic + cfg.max_lead_hours > t_end) {
      result.dropped_ics.push_back(ic);
      continue;
    }
    if (cfg.max_ics == 0 || ics.size() < cfg.max_ics) ics.push_back(ic);
  }
  if (ics.empty()) {
    const std::int64_t need = t0 + cfg.max_lead_hours;
    throw MissingDataError(need, "truth ends at t=" + std::to_string(t_end) + " h but lead " +
                                     std::to_string(cfg.max_lead_hours) + " h from IC t=" +
                                     std::to_string(t0) + " h needs t=" + std::to_string(need) + " h");
  }
  // Gaps inside the window are errors, not drops.
  for (auto ic : ics) {
    (void)truth.state_at(ic);
    for (int lead : cfg.leads()) (void)truth.state_at(ic + lead);
  }

  std::vector<IcOutcome> outcomes(ics.size());
  std::vector<std::exception_ptr> errors(ics.size());
  const std::size_t n_workers = std::min(cfg.workers, ics.size());
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < ics.size(); ++i) outcomes[i] = roll_one(model, truth, cfg, ics[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < ics.size(); i = next++) {
          try {
            outcomes[i] = roll_one(model, truth, cfg, ics[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    // Report the error of the earliest IC so failures do not depend on scheduling.
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  result.evaluated_ics = ics;
  for (std::size_t i = 0; i < ics.size(); ++i) {
    auto& o = outcomes[i];
    if (o.diverged) result.diverged.push_back({ics[i], o.first_bad_lead});
    result.records.insert(result.records.end(), std::make_move_iterator(o.records.begin()),
                          std::make_move_iterator(o.records.end()));
  }
  return result;
}

std::vector<LeadChannelMean> reduce_over_ics(std::span<const MetricRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "no records to reduce");
  std::map<std::pair<int, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& [sum, n] = acc[{r.lead_hours, r.channel}];
    sum += r.rmse;
    ++n;
  }
  std::vector<LeadChannelMean> out;
  out.reserve(acc.size());
  for (const auto& [key, v] : acc) {
    out.push_back({key.first, key.second, v.first / static_cast<double>(v.second), v.second});
  }
  return out;
}

std::vector<LeadChannelMean> merge_reductions(std::span<const LeadChannelMean> a,
                                              std::span<const LeadChannelMean> b) {
  std::map<std::pair<int, std::string>, std::pair<double, std::size_t>> acc;
  for (auto part : {a, b}) {
    for (const auto& m : part) {
      auto& [sum, n] = acc[{m.lead_hours, m.channel}];
      sum += m.mean_rmse * static_cast<double>(m.count);
      n += m.count;
    }
  }
  std::vector<LeadChannelMean> out;
  out.reserve(acc.size());
  for (const auto& [key, v] : acc) {
    out.push_back({key.first, key.second, v.first / static_cast<double>(v.second), v.second});
  }
  return out;
}

nlohmann::ordered_json rollout_manifest(const RolloutConfig& cfg, const OneStepModel& model,
                                        const TruthSource& truth, const RolloutResult& result) {
  nlohmann::ordered_json j;
  j["format"] = "wxscale-rollout-manifest";
  j["version"] = 1;
  j["config"] = to_json(cfg);
  j["model"] = model.describe();
  j["truth_checksum"] = io::crc32_hex(truth.checksum());
  j["n_ics"] = result.evaluated_ics.size();
  j["n_leads"] = cfg.leads().size();
  j["n_records"] = result.records.size();
  j["metric_weighting"] = "per-snapshot area-weighted RMSE, averaged over ICs downstream";
  j["pooled_rmse"] = "spatially unweighted, forecast channels only";
  j["dropped_ics"] = result.dropped_ics;
  auto div = nlohmann::ordered_json::array();
  for (const auto& d : result.diverged) div.push_back({{"ic", d.ic_timestamp}, {"first_bad_lead", d.first_bad_lead}});
  j["diverged_ics"] = div;
  return j;
}

}  // namespace wxscale
