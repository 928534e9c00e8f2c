#include "wxscale/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wxscale/errors.hpp"
#include "wxscale/io.hpp"

namespace wxscale {

namespace {

[[noreturn]] void decomp_error(const std::string& what) {
  throw Error(ErrorCode::kDecomposition, what);
}

std::size_t wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace

DecompLayout parse_layout(std::string_view text) {
  const auto parts = io::split(text, ',');
  if (parts.size() != 3 && parts.size() != 4) {
    throw Error(ErrorCode::kInvalidArgument, "layout must be dp,sp1,sp2[,tp]");
  }
  std::vector<std::size_t> v;
  for (auto p : parts) {
    const long long x = io::parse_int(p);
    if (x <= 0) throw Error(ErrorCode::kInvalidArgument, "layout entries must be positive");
    v.push_back(static_cast<std::size_t>(x));
  }
  DecompLayout layout;
  layout.dp = v[0];
  layout.sp1 = v[1];
  layout.sp2 = v[2];
  layout.tp = v.size() == 4 ? v[3] : 1;
  return layout;
}

std::string to_string(const DecompLayout& layout) {
  return std::to_string(layout.dp) + "," + std::to_string(layout.sp1) + "," +
         std::to_string(layout.sp2) + "," + std::to_string(layout.tp);
}

std::string_view to_string(CommKind kind) {
  switch (kind) {
    case CommKind::kHalo: return "halo";
    case CommKind::kRoll: return "roll";
    case CommKind::kAllreducePartial: return "allreduce-partial";
    case CommKind::kAllreduceGrad: return "allreduce-grad";
  }
  return "halo";
}

void CommTrace::append(const CommTrace& other) {
  events.insert(events.end(), other.events.begin(), other.events.end());
}

std::string to_jsonl(const CommTrace& trace) {
  std::ostringstream out;
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["kind"] = std::string(to_string(e.kind));
    j["src"] = e.src_rank;
    j["dst"] = e.dst_rank;
    j["elements"] = e.element_count;
    j["tag"] = e.tag;
    out << j.dump() << '\n';
  }
  return out.str();
}

CommVolume comm_volume(const CommTrace& trace) {
  CommVolume v;
  for (const auto& e : trace.events) {
    switch (e.kind) {
      case CommKind::kHalo: v.halo += e.element_count; break;
      case CommKind::kRoll: v.roll += e.element_count; break;
      case CommKind::kAllreducePartial: v.allreduce_partial += e.element_count; break;
      case CommKind::kAllreduceGrad: v.allreduce_grad += e.element_count; break;
    }
  }
  return v;
}

void MessageBus::send(CommKind kind, std::size_t src, std::size_t dst, std::vector<double> payload,
                      std::string tag) {
  if (src == dst) decomp_error("self-send on the message bus");
  trace_.events.push_back({kind, src, dst, payload.size(), std::move(tag)});
  queues_[{src, dst}].push_back(std::move(payload));
}

std::vector<double> MessageBus::receive(std::size_t dst, std::size_t src) {
  auto it = queues_.find({src, dst});
  if (it == queues_.end() || it->second.empty()) {
    decomp_error("no pending message from rank " + std::to_string(src) + " to rank " +
                 std::to_string(dst));
  }
  auto payload = std::move(it->second.front());
  it->second.pop_front();
  return payload;
}

bool MessageBus::drained() const {
  return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.second.empty(); });
}

CommTrace MessageBus::take_trace() {
  if (!drained()) decomp_error("message bus has undelivered messages");
  CommTrace t = std::move(trace_);
  trace_ = {};
  return t;
}

std::vector<Subdomain> partition(std::size_t patch_rows, std::size_t patch_cols,
                                 std::size_t window_h, std::size_t window_w,
                                 const DecompLayout& layout) {
  if (layout.sp1 == 0 || layout.sp2 == 0 || layout.dp == 0 || layout.tp == 0) {
    decomp_error("layout counts must be positive");
  }
  if (window_h == 0 || window_w == 0) decomp_error("window must be positive");
  if (patch_rows % layout.sp1 != 0) {
    decomp_error("latitude: sp1=" + std::to_string(layout.sp1) + " does not divide " +
                 std::to_string(patch_rows) + " patch rows");
  }
  if (patch_cols % layout.sp2 != 0) {
    decomp_error("longitude: sp2=" + std::to_string(layout.sp2) + " does not divide " +
                 std::to_string(patch_cols) + " patch columns");
  }
  const std::size_t rows = patch_rows / layout.sp1;
  const std::size_t cols = patch_cols / layout.sp2;
  if (rows % window_h != 0) {
    decomp_error("latitude: subdomain of " + std::to_string(rows) +
                 " rows is not a whole number of windows");
  }
  if (cols % window_w != 0) {
    decomp_error("longitude: subdomain of " + std::to_string(cols) +
                 " columns is not a whole number of windows");
  }
  std::vector<Subdomain> out;
  out.reserve(layout.spatial_ranks());
  for (std::size_t a = 0; a < layout.sp1; ++a) {
    for (std::size_t b = 0; b < layout.sp2; ++b) {
      out.push_back({a * layout.sp2 + b, a, b, a * rows, b * cols, rows, cols});
    }
  }
  return out;
}

std::vector<LocalTile> scatter_tiles(const PatchTensor& global, std::span<const Subdomain> domains,
                                     std::size_t halo_h, std::size_t halo_w) {
  std::vector<LocalTile> tiles;
  tiles.reserve(domains.size());
  for (const auto& d : domains) {
    LocalTile t;
    t.domain = d;
    t.halo_h = halo_h;
    t.halo_w = halo_w;
    t.data = PatchTensor(d.rows + 2 * halo_h, d.cols + 2 * halo_w, global.dim());
    t.row_valid.assign(d.rows + 2 * halo_h, 0);
    for (std::size_t i = 0; i < d.rows; ++i) {
      t.row_valid[i + halo_h] = 1;
      for (std::size_t j = 0; j < d.cols; ++j) {
        std::ranges::copy(global.token(d.row0 + i, d.col0 + j), t.interior(i, j).begin());
      }
    }
    tiles.push_back(std::move(t));
  }
  return tiles;
}

PatchTensor gather_tiles(std::span<const LocalTile> tiles, std::size_t patch_rows,
                         std::size_t patch_cols) {
  if (tiles.empty()) decomp_error("nothing to gather");
  PatchTensor out(patch_rows, patch_cols, tiles.front().data.dim());
  for (const auto& t : tiles) {
    for (std::size_t i = 0; i < t.domain.rows; ++i) {
      for (std::size_t j = 0; j < t.domain.cols; ++j) {
        std::ranges::copy(t.interior(i, j), out.token(t.domain.row0 + i, t.domain.col0 + j).begin());
      }
    }
  }
  return out;
}

namespace {

// Copies a rectangle of extended-tile tokens into a flat payload.
std::vector<double> pack(const PatchTensor& t, std::size_t r0, std::size_t nr, std::size_t c0,
                         std::size_t nc) {
  std::vector<double> out;
  out.reserve(nr * nc * t.dim());
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      const auto tok = t.token(r0 + i, c0 + j);
      out.insert(out.end(), tok.begin(), tok.end());
    }
  }
  return out;
}

void unpack(PatchTensor& t, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc,
            std::span<const double> payload) {
  if (payload.size() != nr * nc * t.dim()) decomp_error("halo payload has the wrong size");
  std::size_t k = 0;
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      auto tok = t.token(r0 + i, c0 + j);
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(k), tok.size(), tok.begin());
      k += tok.size();
    }
  }
}

void zero_rows(PatchTensor& t, std::size_t r0, std::size_t nr) {
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) std::ranges::fill(t.token(r0 + i, j), 0.0);
  }
}

}  // namespace

TileExchange halo_exchange(std::vector<LocalTile> tiles, const DecompLayout& layout,
                           const std::string& tag) {
  if (tiles.size() != layout.spatial_ranks()) decomp_error("tile count does not match the layout");
  const std::size_t hh = tiles.front().halo_h;
  const std::size_t hw = tiles.front().halo_w;
  const std::size_t rows = tiles.front().domain.rows;
  const std::size_t cols = tiles.front().domain.cols;
  for (const auto& t : tiles) {
    if (t.halo_h != hh || t.halo_w != hw || t.domain.rows != rows || t.domain.cols != cols) {
      decomp_error("tiles disagree on extent or halo width");
    }
  }
  if (hh > rows) decomp_error("halo of " + std::to_string(hh) + " rows is wider than the neighbour interior");
  if (hw > cols) decomp_error("halo of " + std::to_string(hw) + " columns is wider than the neighbour interior");

  const std::size_t sp1 = layout.sp1;
  const std::size_t sp2 = layout.sp2;
  auto rank_of = [&](std::size_t a, std::size_t b) { return a * sp2 + b; };
  auto gid = [&](std::size_t r) { return r * layout.tp; };
  MessageBus bus;

  if (hw > 0) {
    const std::string lon_tag = tag + "-lon";
    for (auto& t : tiles) {
      auto west = pack(t.data, hh, rows, hw, hw);
      auto east = pack(t.data, hh, rows, hw + cols - hw, hw);
      if (sp2 == 1) {
        unpack(t.data, hh, rows, hw + cols, hw, west);
        unpack(t.data, hh, rows, 0, hw, east);
        continue;
      }
      const std::size_t a = t.domain.sp1_index;
      const std::size_t b = t.domain.sp2_index;
      bus.send(CommKind::kHalo, gid(t.domain.rank), gid(rank_of(a, (b + sp2 - 1) % sp2)),
               std::move(west), lon_tag);
      bus.send(CommKind::kHalo, gid(t.domain.rank), gid(rank_of(a, (b + 1) % sp2)), std::move(east),
               lon_tag);
    }
    if (sp2 > 1) {
      for (auto& t : tiles) {
        const std::size_t a = t.domain.sp1_index;
        const std::size_t b = t.domain.sp2_index;
        const auto east_payload = bus.receive(gid(t.domain.rank), gid(rank_of(a, (b + 1) % sp2)));
        unpack(t.data, hh, rows, hw + cols, hw, east_payload);
        const auto west_payload = bus.receive(gid(t.domain.rank), gid(rank_of(a, (b + sp2 - 1) % sp2)));
        unpack(t.data, hh, rows, 0, hw, west_payload);
      }
    }
  }

  if (hh > 0) {
    const std::string lat_tag = tag + "-lat";
    const std::size_t width = cols + 2 * hw;
    for (auto& t : tiles) {
      const std::size_t a = t.domain.sp1_index;
      const std::size_t b = t.domain.sp2_index;
      if (a > 0) {
        bus.send(CommKind::kHalo, gid(t.domain.rank), gid(rank_of(a - 1, b)),
                 pack(t.data, hh, hh, 0, width), lat_tag);
      }
      if (a + 1 < sp1) {
        bus.send(CommKind::kHalo, gid(t.domain.rank), gid(rank_of(a + 1, b)),
                 pack(t.data, rows, hh, 0, width), lat_tag);
      }
    }
    for (auto& t : tiles) {
      const std::size_t a = t.domain.sp1_index;
      const std::size_t b = t.domain.sp2_index;
      if (a + 1 < sp1) {
        unpack(t.data, hh + rows, hh, 0, width, bus.receive(gid(t.domain.rank), gid(rank_of(a + 1, b))));
        std::fill_n(t.row_valid.begin() + static_cast<std::ptrdiff_t>(hh + rows), hh, 1);
      } else {
        zero_rows(t.data, hh + rows, hh);
        std::fill_n(t.row_valid.begin() + static_cast<std::ptrdiff_t>(hh + rows), hh, 0);
      }
      if (a > 0) {
        unpack(t.data, 0, hh, 0, width, bus.receive(gid(t.domain.rank), gid(rank_of(a - 1, b))));
        std::fill_n(t.row_valid.begin(), hh, 1);
      } else {
        zero_rows(t.data, 0, hh);
        std::fill_n(t.row_valid.begin(), hh, 0);
      }
    }
  }
  return {std::move(tiles), bus.take_trace()};
}

TileExchange distributed_roll(const std::vector<LocalTile>& tiles, Shift2 shift,
                              const DecompLayout& layout, std::size_t patch_rows,
                              std::size_t patch_cols, const std::string& tag) {
  if (std::llabs(shift.rows) >= static_cast<long long>(patch_rows) ||
      std::llabs(shift.cols) >= static_cast<long long>(patch_cols)) {
    throw Error(ErrorCode::kInvalidArgument, "roll shift out of range for the patch grid");
  }
  if (tiles.size() != layout.spatial_ranks()) decomp_error("tile count does not match the layout");
  const std::size_t rows = patch_rows / layout.sp1;
  const std::size_t cols = patch_cols / layout.sp2;
  const std::size_t dim = tiles.front().data.dim();
  auto gid = [&](std::size_t r) { return r * layout.tp; };

  struct Target {
    std::size_t rank, i, j;
  };
  auto target = [&](const Subdomain& d, std::size_t i, std::size_t j) {
    const std::size_t gi = wrap(static_cast<long long>(d.row0 + i) + shift.rows, patch_rows);
    const std::size_t gj = wrap(static_cast<long long>(d.col0 + j) + shift.cols, patch_cols);
    const std::size_t a = gi / rows;
    const std::size_t b = gj / cols;
    return Target{a * layout.sp2 + b, gi - a * rows, gj - b * cols};
  };

  std::vector<LocalTile> out;
  out.reserve(tiles.size());
  for (const auto& t : tiles) {
    LocalTile o;
    o.domain = t.domain;
    o.data = PatchTensor(t.domain.rows, t.domain.cols, dim);
    o.row_valid.assign(t.domain.rows, 1);
    out.push_back(std::move(o));
  }

  MessageBus bus;
  for (const auto& t : tiles) {
    std::vector<std::vector<double>> buckets(tiles.size());
    for (std::size_t i = 0; i < t.domain.rows; ++i) {
      for (std::size_t j = 0; j < t.domain.cols; ++j) {
        const auto tg = target(t.domain, i, j);
        const auto tok = t.interior(i, j);
        if (tg.rank == t.domain.rank) {
          std::ranges::copy(tok, out[tg.rank].data.token(tg.i, tg.j).begin());
        } else {
          buckets[tg.rank].insert(buckets[tg.rank].end(), tok.begin(), tok.end());
        }
      }
    }
    for (std::size_t r = 0; r < buckets.size(); ++r) {
      if (!buckets[r].empty()) {
        bus.send(CommKind::kRoll, gid(t.domain.rank), gid(r), std::move(buckets[r]), tag);
      }
    }
  }
  // Receivers replay each sender's traversal order to place the payload.
  for (auto& dst : out) {
    for (const auto& src : tiles) {
      if (src.domain.rank == dst.domain.rank) continue;
      bool expects = false;
      for (std::size_t i = 0; i < src.domain.rows && !expects; ++i) {
        for (std::size_t j = 0; j < src.domain.cols && !expects; ++j) {
          expects = target(src.domain, i, j).rank == dst.domain.rank;
        }
      }
      if (!expects) continue;
      const auto payload = bus.receive(gid(dst.domain.rank), gid(src.domain.rank));
      std::size_t k = 0;
      for (std::size_t i = 0; i < src.domain.rows; ++i) {
        for (std::size_t j = 0; j < src.domain.cols; ++j) {
          const auto tg = target(src.domain, i, j);
          if (tg.rank != dst.domain.rank) continue;
          auto tok = dst.data.token(tg.i, tg.j);
          std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(k), dim, tok.begin());
          k += dim;
        }
      }
      if (k != payload.size()) decomp_error("roll payload has the wrong size");
    }
  }
  return {std::move(out), bus.take_trace()};
}

namespace {

ShardedOutput reduce_partials(std::vector<PatchTensor> partials, std::size_t rank_base,
                              const std::string& tag) {
  const std::size_t tp = partials.size();
  if (tp == 1) return {std::move(partials.front()), {}};
  MessageBus bus;
  for (std::size_t t = 0; t < tp; ++t) {
    for (std::size_t u = 0; u < tp; ++u) {
      if (u == t) continue;
      const auto d = partials[t].data();
      bus.send(CommKind::kAllreducePartial, rank_base + t, rank_base + u,
               std::vector<double>(d.begin(), d.end()), tag);
    }
  }
  // Every shard sums in shard order, so all shards hold identical results.
  std::vector<PatchTensor> reduced;
  reduced.reserve(tp);
  for (std::size_t u = 0; u < tp; ++u) {
    PatchTensor acc(partials[u].rows(), partials[u].cols(), partials[u].dim());
    auto a = acc.data();
    for (std::size_t t = 0; t < tp; ++t) {
      if (t == u) {
        const auto own = partials[u].data();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += own[i];
      } else {
        const auto p = bus.receive(rank_base + u, rank_base + t);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += p[i];
      }
    }
    reduced.push_back(std::move(acc));
  }
  for (std::size_t u = 1; u < tp; ++u) {
    if (!(reduced[u] == reduced[0])) decomp_error("shards disagree after AllReduce");
  }
  return {std::move(reduced.front()), bus.take_trace()};
}

}  // namespace

ShardedOutput sharded_attention(const SwinBlockWeights& w, const SwinConfig& cfg,
                                const PatchTensor& input, std::span<const int> groups,
                                std::size_t windows_r, std::size_t windows_c, std::size_t tp,
                                std::size_t rank_base, const std::string& tag) {
  if (tp == 0 || cfg.heads % tp != 0) {
    decomp_error("tp=" + std::to_string(tp) + " does not divide " + std::to_string(cfg.heads) +
                 " heads");
  }
  const std::size_t per = cfg.heads / tp;
  std::vector<PatchTensor> partials;
  partials.reserve(tp);
  for (std::size_t t = 0; t < tp; ++t) {
    partials.push_back(swin::window_attention(w, cfg, input, groups, windows_r, windows_c, t * per,
                                              (t + 1) * per, t == 0));
  }
  return reduce_partials(std::move(partials), rank_base, tag);
}

ShardedOutput sharded_mlp(const SwinBlockWeights& w, const SwinConfig& cfg,
                          const PatchTensor& normed, std::size_t tp, std::size_t rank_base,
                          const std::string& tag) {
  const std::size_t hidden = cfg.hidden_dim();
  if (tp == 0 || hidden % tp != 0) {
    decomp_error("tp=" + std::to_string(tp) + " does not divide the MLP width " +
                 std::to_string(hidden));
  }
  const std::size_t per = hidden / tp;
  std::vector<PatchTensor> partials;
  partials.reserve(tp);
  for (std::size_t t = 0; t < tp; ++t) {
    PatchTensor p(normed.rows(), normed.cols(), normed.dim());
    for (std::size_t i = 0; i < normed.rows(); ++i) {
      for (std::size_t j = 0; j < normed.cols(); ++j) {
        swin::mlp_partial(w, normed.token(i, j), t * per, (t + 1) * per, t == 0, p.token(i, j));
      }
    }
    partials.push_back(std::move(p));
  }
  return reduce_partials(std::move(partials), rank_base, tag);
}

CommTrace gradient_allreduce_trace(const DecompLayout& layout, std::size_t param_count) {
  CommTrace trace;
  if (layout.dp <= 1) return trace;
  const std::size_t replica_size = layout.spatial_ranks() * layout.tp;
  for (std::size_t d = 0; d < layout.dp; ++d) {
    trace.events.push_back({CommKind::kAllreduceGrad, d * replica_size,
                            ((d + 1) % layout.dp) * replica_size, param_count, "grad"});
  }
  return trace;
}

std::string_view to_string(ShiftStrategy s) { return s == ShiftStrategy::kRoll ? "roll" : "halo"; }

ShiftStrategy shift_strategy_from_string(std::string_view s) {
  if (s == "roll") return ShiftStrategy::kRoll;
  if (s == "halo") return ShiftStrategy::kHalo;
  throw Error(ErrorCode::kInvalidArgument, "unknown shift strategy '" + std::string(s) + "'");
}

double max_relative_deviation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

DecomposedSwin::DecomposedSwin(std::shared_ptr<const SwinForecaster> model, DecompLayout layout,
                               ShiftStrategy strategy)
    : model_(std::move(model)), layout_(layout), strategy_(strategy) {
  const auto& cfg = model_->config();
  domains_ = partition(model_->patch_rows(), model_->patch_cols(), cfg.window_h, cfg.window_w,
                       layout_);
  if (cfg.heads % layout_.tp != 0) {
    decomp_error("tp=" + std::to_string(layout_.tp) + " does not divide " +
                 std::to_string(cfg.heads) + " heads");
  }
  if (cfg.hidden_dim() % layout_.tp != 0) {
    decomp_error("tp=" + std::to_string(layout_.tp) + " does not divide the MLP width");
  }
}

std::vector<PatchTensor> DecomposedSwin::attention_block(std::size_t block,
                                                         const std::vector<PatchTensor>& normed,
                                                         CommTrace& trace) const {
  const auto& cfg = model_->config();
  const auto& w = model_->weights().blocks[block];
  const std::size_t hp = model_->patch_rows();
  const std::size_t wp = model_->patch_cols();
  const std::size_t tp = layout_.tp;
  const Shift2 s = cfg.block_shift(block);
  const std::string prefix = "block" + std::to_string(block) + "/";
  std::vector<PatchTensor> out(domains_.size());

  if (s.rows == 0 && s.cols == 0) {
    for (const auto& d : domains_) {
      const std::vector<int> groups(d.rows * d.cols, 0);
      auto res = sharded_attention(w, cfg, normed[d.rank], groups, d.rows / cfg.window_h,
                                   d.cols / cfg.window_w, tp, d.rank * tp, prefix + "attn");
      trace.append(res.trace);
      out[d.rank] = std::move(res.output);
    }
    return out;
  }

  if (strategy_ == ShiftStrategy::kRoll) {
    std::vector<LocalTile> tiles;
    for (const auto& d : domains_) {
      LocalTile t;
      t.domain = d;
      t.data = normed[d.rank];
      t.row_valid.assign(d.rows, 1);
      tiles.push_back(std::move(t));
    }
    auto rolled = distributed_roll(tiles, {-s.rows, -s.cols}, layout_, hp, wp, prefix + "roll");
    trace.append(rolled.trace);
    for (auto& t : rolled.tiles) {
      const auto& d = t.domain;
      const auto groups = swin::seam_groups(d.rows, d.cols, d.row0, hp, s.rows);
      auto res = sharded_attention(w, cfg, t.data, groups, d.rows / cfg.window_h,
                                   d.cols / cfg.window_w, tp, d.rank * tp, prefix + "attn");
      trace.append(res.trace);
      t.data = std::move(res.output);
    }
    auto back = distributed_roll(rolled.tiles, s, layout_, hp, wp, prefix + "unroll");
    trace.append(back.trace);
    for (auto& t : back.tiles) out[t.domain.rank] = std::move(t.data);
    return out;
  }

  // Halo strategy: shifted windows start half a window before each subdomain
  // edge, so each rank evaluates one extra window row/column.
  const std::size_t hh = s.rows > 0 ? cfg.window_h - static_cast<std::size_t>(s.rows) : 0;
  const std::size_t hw = s.cols > 0 ? cfg.window_w - static_cast<std::size_t>(s.cols) : 0;
  std::vector<LocalTile> tiles;
  for (const auto& d : domains_) {
    LocalTile t;
    t.domain = d;
    t.halo_h = hh;
    t.halo_w = hw;
    t.data = PatchTensor(d.rows + 2 * hh, d.cols + 2 * hw, cfg.embed_dim);
    t.row_valid.assign(d.rows + 2 * hh, 0);
    for (std::size_t i = 0; i < d.rows; ++i) {
      t.row_valid[i + hh] = 1;
      for (std::size_t j = 0; j < d.cols; ++j) {
        std::ranges::copy(normed[d.rank].token(i, j), t.interior(i, j).begin());
      }
    }
    tiles.push_back(std::move(t));
  }
  auto ex = halo_exchange(std::move(tiles), layout_, prefix + "halo");
  trace.append(ex.trace);
  for (const auto& t : ex.tiles) {
    const auto& d = t.domain;
    std::vector<int> groups(t.data.rows() * t.data.cols());
    for (std::size_t i = 0; i < t.data.rows(); ++i) {
      std::fill_n(groups.begin() + static_cast<std::ptrdiff_t>(i * t.data.cols()), t.data.cols(),
                  t.row_valid[i] ? 0 : -1);
    }
    const std::size_t wr = d.rows / cfg.window_h + (s.rows > 0 ? 1 : 0);
    const std::size_t wc = d.cols / cfg.window_w + (s.cols > 0 ? 1 : 0);
    auto res = sharded_attention(w, cfg, t.data, groups, wr, wc, tp, d.rank * tp, prefix + "attn");
    trace.append(res.trace);
    PatchTensor local(d.rows, d.cols, cfg.embed_dim);
    for (std::size_t i = 0; i < d.rows; ++i) {
      for (std::size_t j = 0; j < d.cols; ++j) {
        std::ranges::copy(res.output.token(i + hh, j + hw), local.token(i, j).begin());
      }
    }
    out[d.rank] = std::move(local);
  }
  return out;
}

DecomposedSwin::Result DecomposedSwin::forward(const FieldState& state) const {
  const auto& cfg = model_->config();
  const auto& weights = model_->weights();
  // Embedding validates the input layout and is per-patch, so each rank
  // embeds only its own patches.
  (void)model_->embed(state);
  std::vector<PatchTensor> x(domains_.size());
  std::vector<double> patch(weights.embed.in_dim);
  for (const auto& d : domains_) {
    PatchTensor local(d.rows, d.cols, cfg.embed_dim);
    for (std::size_t i = 0; i < d.rows; ++i) {
      for (std::size_t j = 0; j < d.cols; ++j) {
        swin::gather_patch(state, cfg, d.row0 + i, d.col0 + j, patch);
        weights.embed.apply(patch, local.token(i, j));
      }
    }
    x[d.rank] = std::move(local);
  }

  CommTrace trace;
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const auto& w = weights.blocks[b];
    std::vector<PatchTensor> normed(domains_.size());
    for (const auto& d : domains_) {
      PatchTensor n(d.rows, d.cols, cfg.embed_dim);
      for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) swin::rms_norm(x[d.rank].token(i, j), w.norm1, n.token(i, j));
      }
      normed[d.rank] = std::move(n);
    }
    const auto attn = attention_block(b, normed, trace);
    for (const auto& d : domains_) {
      auto xd = x[d.rank].data();
      const auto ad = attn[d.rank].data();
      for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += ad[i];

      PatchTensor n2(d.rows, d.cols, cfg.embed_dim);
      for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) swin::rms_norm(x[d.rank].token(i, j), w.norm2, n2.token(i, j));
      }
      auto mlp = sharded_mlp(w, cfg, n2, layout_.tp, d.rank * layout_.tp,
                             "block" + std::to_string(b) + "/mlp");
      trace.append(mlp.trace);
      const auto md = mlp.output.data();
      for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += md[i];
    }
  }

  // Gather: every rank writes its patches of the forecast channels.
  std::vector<double> values(state.values().begin(), state.values().end());
  std::vector<double> head(weights.head.out_dim);
  for (const auto& d : domains_) {
    for (std::size_t i = 0; i < d.rows; ++i) {
      for (std::size_t j = 0; j < d.cols; ++j) {
        weights.head.apply(x[d.rank].token(i, j), head);
        swin::scatter_patch(head, state.schema(), state.grid(), cfg, d.row0 + i, d.col0 + j, values);
      }
    }
  }
  return {state.with_values(std::move(values), state.timestamp() + kStepHours), std::move(trace)};
}

DecomposedSwinForecaster::DecomposedSwinForecaster(std::shared_ptr<const SwinForecaster> model,
                                                   DecompLayout layout, ShiftStrategy strategy,
                                                   bool verify, double tolerance)
    : model_(model), engine_(model, layout, strategy), verify_(verify), tolerance_(tolerance) {}

FieldState DecomposedSwinForecaster::step(const FieldState& state) const {
  auto result = engine_.forward(state);
  double dev = 0.0;
  if (verify_) {
    const auto reference = model_->step(state);
    dev = max_relative_deviation(result.output.values(), reference.values());
  }
  {
    std::lock_guard lock(mutex_);
    if (steps_ == 0) first_trace_ = result.trace;
    ++steps_;
    max_deviation_ = std::max(max_deviation_, dev);
  }
  if (verify_ && !(dev < tolerance_)) {
    throw Error(ErrorCode::kVerifyMismatch,
                "decomposed forward deviates from sequential by " + io::format_double(dev));
  }
  return std::move(result.output);
}

nlohmann::ordered_json DecomposedSwinForecaster::describe() const {
  auto j = model_->describe();
  j["layout"] = to_string(engine_.layout());
  return j;
}

double DecomposedSwinForecaster::max_deviation() const {
  std::lock_guard lock(mutex_);
  return max_deviation_;
}

std::size_t DecomposedSwinForecaster::steps() const {
  std::lock_guard lock(mutex_);
  return steps_;
}

CommTrace DecomposedSwinForecaster::first_step_trace() const {
  std::lock_guard lock(mutex_);
  return first_trace_;
}

}  // namespace wxscale
