#include "wxscale/cli.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "wxscale/decomp.hpp"
#include "wxscale/errors.hpp"
#include "wxscale/forecaster.hpp"
#include "wxscale/io.hpp"
#include "wxscale/report.hpp"
#include "wxscale/rollout.hpp"
#include "wxscale/scaling.hpp"
#include "wxscale/synth.hpp"

namespace fs = std::filesystem;

namespace wxscale {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfig, "config: " + what); }

std::string where(const toml::node& n) {
  const auto& src = n.source();
  return src.begin.line > 0 ? " (line " + std::to_string(src.begin.line) + ")" : std::string();
}

nlohmann::json to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (auto&& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (const auto* a = n.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (auto&& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  config_error("unsupported value type" + where(n));
}

/// View of one config table that rejects unknown keys and mistyped values.
class Section {
 public:
  Section() = default;
  Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  bool present() const { return table_ != nullptr; }

  const toml::node* node(const std::string& key) const {
    used_.insert(key);
    return table_ == nullptr ? nullptr : table_->get(key);
  }

  std::optional<double> number(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    if (const auto* i = n->as_integer()) return static_cast<double>(i->get());
    if (const auto* f = n->as_floating_point()) return f->get();
    config_error("key '" + name(key) + "' must be a number" + where(*n));
  }

  std::optional<std::int64_t> integer(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    if (const auto* i = n->as_integer()) return i->get();
    config_error("key '" + name(key) + "' must be an integer" + where(*n));
  }

  std::optional<bool> boolean(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    if (const auto* b = n->as_boolean()) return b->get();
    config_error("key '" + name(key) + "' must be true or false" + where(*n));
  }

  std::optional<std::string> string(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    if (const auto* s = n->as_string()) return s->get();
    config_error("key '" + name(key) + "' must be a string" + where(*n));
  }

  std::optional<std::vector<double>> numbers(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    const auto* a = n->as_array();
    if (a == nullptr) config_error("key '" + name(key) + "' must be an array of numbers" + where(*n));
    std::vector<double> out;
    for (auto&& v : *a) {
      if (const auto* i = v.as_integer()) out.push_back(static_cast<double>(i->get()));
      else if (const auto* f = v.as_floating_point()) out.push_back(f->get());
      else config_error("key '" + name(key) + "' must be an array of numbers" + where(v));
    }
    return out;
  }

  std::optional<std::vector<int>> integers(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    const auto* a = n->as_array();
    if (a == nullptr) config_error("key '" + name(key) + "' must be an array of integers" + where(*n));
    std::vector<int> out;
    for (auto&& v : *a) {
      const auto* i = v.as_integer();
      if (i == nullptr) config_error("key '" + name(key) + "' must be an array of integers" + where(v));
      out.push_back(static_cast<int>(i->get()));
    }
    return out;
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return std::nullopt;
    const auto* a = n->as_array();
    if (a == nullptr) config_error("key '" + name(key) + "' must be an array of strings" + where(*n));
    std::vector<std::string> out;
    for (auto&& v : *a) {
      const auto* s = v.as_string();
      if (s == nullptr) config_error("key '" + name(key) + "' must be an array of strings" + where(v));
      out.push_back(s->get());
    }
    return out;
  }

  Section sub(const std::string& key) const {
    const auto* n = node(key);
    if (n == nullptr) return Section(nullptr, name(key));
    const auto* t = n->as_table();
    if (t == nullptr) config_error("key '" + name(key) + "' must be a table" + where(*n));
    return Section(t, name(key));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    if (table_ != nullptr) {
      for (auto&& [k, v] : *table_) out.emplace_back(k.str());
    }
    return out;
  }

  /// Errors on the first key that no accessor asked for.
  void reject_unknown() const {
    if (table_ == nullptr) return;
    for (auto&& [k, v] : *table_) {
      if (!used_.contains(std::string(k.str()))) {
        config_error("unknown key '" + name(std::string(k.str())) + "'" + where(v));
      }
    }
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const toml::table* table_ = nullptr;
  std::string prefix_;
  mutable std::set<std::string> used_;
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool force = false;
  bool verify = false;
  std::string layout;
};

class Context {
 public:
  Context(Globals g, std::ostream& out, std::ostream& err) : g_(std::move(g)), out_(out), err_(err) {
    if (!g_.config_path.empty()) {
      if (!fs::is_regular_file(g_.config_path)) throw Error(ErrorCode::kIo, g_.config_path + ": no such config file");
      try {
        table_ = toml::parse_file(g_.config_path);
      } catch (const toml::parse_error& e) {
        config_error(g_.config_path + ": line " + std::to_string(e.source().begin.line) + ": " +
                     std::string(e.description()));
      }
    }
    root_ = Section(&table_, "");
    if (auto v = root_.integer("schema_version"); v && *v != 1) {
      config_error("unsupported schema_version " + std::to_string(*v));
    }
    for (const auto& k : root_.keys()) {
      static const std::set<std::string> known = {"schema_version", "seed",  "synth",  "model",
                                                  "rollout",        "fit",   "derive", "report"};
      if (!known.contains(k)) config_error("unknown key '" + k + "'" + where(*table_.get(k)));
    }
  }

  const Globals& globals() const { return g_; }
  const Section& root() const { return root_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  void notice(const std::string& msg) { err_ << "wxscale: notice: " << msg << '\n'; }

  std::uint64_t seed() const {
    if (g_.seed_given) return g_.seed;
    if (auto s = root_.integer("seed")) return static_cast<std::uint64_t>(*s);
    return 0;
  }

  /// Output directory, refusing to reuse a non-empty one without --force.
  fs::path output_dir(const Section& section) const {
    std::string dir = g_.out;
    if (dir.empty()) dir = section.string("out").value_or("");
    if (dir.empty()) throw Error(ErrorCode::kInvalidArgument, "no output directory (use --out)");
    const fs::path p(dir);
    if (fs::exists(p)) {
      if (!fs::is_directory(p)) throw Error(ErrorCode::kOutputExists, dir + " exists and is not a directory");
      if (!fs::is_empty(p) && !g_.force) {
        throw Error(ErrorCode::kOutputExists, dir + " is not empty (use --force to overwrite)");
      }
    }
    return p;
  }

 private:
  Globals g_;
  std::ostream& out_;
  std::ostream& err_;
  toml::table table_;
  Section root_;
};

std::string pick(const std::string& flag, const Section& s, const std::string& key) {
  if (!flag.empty()) return flag;
  return s.string(key).value_or("");
}

std::string require_path(const std::string& flag, const Section& s, const std::string& key,
                         const std::string& what) {
  auto p = pick(flag, s, key);
  if (p.empty()) throw Error(ErrorCode::kInvalidArgument, "missing " + what + " (--" + key + ")");
  return p;
}

// ---- synth -----------------------------------------------------------------

std::shared_ptr<const ChannelSchema> truth_schema(const std::vector<std::string>& names, bool statics) {
  const auto canonical = canonical_schema();
  std::vector<ChannelInfo> entries;
  if (names.size() == 1 && names.front() == "canonical") {
    entries.assign(canonical.entries().begin(), canonical.entries().end());
  } else {
    for (const auto& n : names) {
      const auto idx = canonical.index_of(n);
      if (!idx) config_error("unknown channel '" + n + "' in synth.truth.channels");
      entries.push_back(canonical[*idx]);
    }
  }
  ChannelSchema schema(std::move(entries));
  return std::make_shared<const ChannelSchema>(statics ? with_static_channels(schema) : schema);
}

int cmd_synth(Context& ctx) {
  const Section s = ctx.root().sub("synth");
  const fs::path out = ctx.output_dir(s);

  std::vector<double> budgets;
  if (auto b = s.numbers("budgets")) {
    budgets = *b;
  } else {
    const double lo = s.number("budget_min").value_or(1e12);
    const double hi = s.number("budget_max").value_or(1e15);
    const auto n = s.integer("n_budgets").value_or(5);
    if (n < 2 || !(lo > 0.0) || !(hi > lo)) config_error("synth budget range is invalid");
    for (std::int64_t i = 0; i < n; ++i) {
      budgets.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
    }
  }
  const auto n_per_budget = s.integer("n_per_budget").value_or(7);
  if (n_per_budget < 3) config_error("synth.n_per_budget must be at least 3");

  FamilyOptions opts;
  if (auto l = s.integers("leads")) {
    opts.leads = *l;
  } else {
    const auto max_lead = s.integer("max_lead_hours").value_or(240);
    if (max_lead < kStepHours || max_lead % kStepHours != 0) config_error("synth.max_lead_hours must be a multiple of 6");
    opts.leads.clear();
    for (int h = 6; h <= max_lead; h += 6) opts.leads.push_back(h);
  }
  opts.channels = s.strings("channels").value_or(std::vector<std::string>{"z500", "t850", "t2m"});
  opts.include_pooled = s.boolean("include_pooled").value_or(true);
  opts.run_prefix = s.string("run_prefix").value_or("r");
  opts.seed = ctx.seed();

  SurfaceSpec spec;
  const Section surf = s.sub("surface");
  spec.e_floor = surf.number("e_floor").value_or(spec.e_floor);
  spec.terms.amp_n = surf.number("amp_n").value_or(spec.terms.amp_n);
  spec.terms.exp_n = surf.number("exp_n").value_or(spec.terms.exp_n);
  spec.terms.amp_d = surf.number("amp_d").value_or(spec.terms.amp_d);
  spec.terms.exp_d = surf.number("exp_d").value_or(spec.terms.exp_d);
  spec.noise_sigma = surf.number("noise_sigma").value_or(0.0);
  const auto kappa = surf.number("kappa");
  spec.kappa = kappa.value_or(kDefaultKappa);
  if (!kappa) ctx.notice("synth.surface.kappa not set; using the default kappa = 6");
  const Section ov = surf.sub("overrides");
  for (const auto& ch : ov.keys()) {
    const Section o = ov.sub(ch);
    SurfaceTerms t = spec.terms;
    t.amp_n = o.number("amp_n").value_or(t.amp_n);
    t.exp_n = o.number("exp_n").value_or(t.exp_n);
    t.amp_d = o.number("amp_d").value_or(t.amp_d);
    t.exp_d = o.number("exp_d").value_or(t.exp_d);
    o.reject_unknown();
    spec.per_channel_overrides[ch] = t;
  }
  ov.reject_unknown();
  surf.reject_unknown();

  const Section hz = s.sub("horizon");
  opts.horizon.flattening = hz.number("flattening").value_or(opts.horizon.flattening);
  opts.horizon.growth = hz.number("growth").value_or(opts.horizon.growth);
  hz.reject_unknown();

  const Section tr = s.sub("truth");
  std::optional<TruthKind> truth_kind;
  std::size_t n_lat = 16, n_lon = 32, n_states = 0;
  std::vector<std::string> truth_channels{"z500", "t850", "t2m"};
  bool statics = false;
  std::string grid_kind = "cell_centered";
  if (tr.present()) {
    truth_kind = truth_kind_from_string(tr.string("kind").value_or("constant"));
    n_lat = static_cast<std::size_t>(tr.integer("n_lat").value_or(16));
    n_lon = static_cast<std::size_t>(tr.integer("n_lon").value_or(32));
    n_states = static_cast<std::size_t>(tr.integer("states").value_or(45));
    truth_channels = tr.strings("channels").value_or(truth_channels);
    statics = tr.boolean("static_channels").value_or(false);
    grid_kind = tr.string("grid").value_or(grid_kind);
    if (grid_kind != "cell_centered" && grid_kind != "regular") {
      config_error("synth.truth.grid must be cell_centered or regular");
    }
    tr.reject_unknown();
  }
  s.string("out");
  s.reject_unknown();

  const auto family = make_isoflop_family(spec, budgets, static_cast<std::size_t>(n_per_budget), opts);
  auto manifest = generator_manifest(spec, budgets, static_cast<std::size_t>(n_per_budget), opts);
  manifest["kappa_source"] = kappa ? "config" : "default";

  report::Bundle bundle(out);
  bundle.write("runs.csv", runs_csv(family.runs));
  bundle.write("metrics.csv", metrics_csv(family.records));
  if (truth_kind) {
    auto grid = std::make_shared<const GridSpec>(grid_kind == "regular" ? GridSpec::regular(n_lat, n_lon)
                                                                        : GridSpec::cell_centered(n_lat, n_lon));
    const auto truth = synth_truth(grid, truth_schema(truth_channels, statics), *truth_kind, ctx.seed(), n_states);
    write_truth_dir(out / "truth", truth.states());
    manifest["truth"] = {{"kind", std::string(to_string(*truth_kind))},
                         {"n_lat", n_lat},
                         {"n_lon", n_lon},
                         {"grid", grid_kind},
                         {"states", n_states},
                         {"channels", truth_channels},
                         {"static_channels", statics},
                         {"decay_factor", kDecayFactor},
                         {"checksum", io::crc32_hex(truth.checksum())}};
  }
  bundle.write("synth_manifest.json", manifest.dump(2) + "\n");
  bundle.note("seed", ctx.seed());
  bundle.finish("synth");
  ctx.out() << "wrote " << family.runs.size() << " runs and " << family.records.size() << " metric records to "
            << out.string() << '\n';
  return 0;
}

// ---- rollout ---------------------------------------------------------------

struct RolloutFlags {
  std::string truth;
  std::string model;
  std::string shift_strategy;
  int max_lead = 0;
  std::size_t max_ics = 0;
  std::size_t workers = 0;
  std::size_t dp = 0, sp1 = 0, sp2 = 0, tp = 0;
};

int cmd_rollout(Context& ctx, const RolloutFlags& f) {
  const Section s = ctx.root().sub("rollout");
  const fs::path out = ctx.output_dir(s);
  const DirectoryTruth truth(require_path(f.truth, s, "truth", "truth directory"));
  const auto& first = truth.state_at(truth.timestamps().front());

  nlohmann::json model_json;
  if (!f.model.empty()) {
    try {
      model_json = nlohmann::json::parse(io::read_text(f.model));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, f.model + ": " + e.what());
    }
  } else if (const auto* m = ctx.root().node("model")) {
    model_json = to_json(*m);
  } else {
    throw Error(ErrorCode::kConfig, "no model given (use --model or a [model] table)");
  }
  if (ctx.globals().seed_given && model_json.value("kind", "") == "swin") model_json["seed"] = ctx.seed();

  RolloutConfig cfg;
  cfg.ic_stride_hours = static_cast<int>(s.integer("ic_stride_hours").value_or(cfg.ic_stride_hours));
  cfg.max_lead_hours = f.max_lead > 0 ? f.max_lead : static_cast<int>(s.integer("max_lead_hours").value_or(cfg.max_lead_hours));
  cfg.max_ics = f.max_ics > 0 ? f.max_ics : static_cast<std::size_t>(s.integer("max_ics").value_or(0));
  cfg.workers = f.workers > 0 ? f.workers : static_cast<std::size_t>(s.integer("workers").value_or(1));
  cfg.run_id = s.string("run_id").value_or(cfg.run_id);
  cfg.abort_on_divergence = s.boolean("abort_on_divergence").value_or(false);

  std::string layout_text = ctx.globals().layout;
  if (layout_text.empty() && f.dp + f.sp1 + f.sp2 + f.tp > 0) {
    layout_text = std::to_string(std::max<std::size_t>(f.dp, 1)) + "," + std::to_string(std::max<std::size_t>(f.sp1, 1)) +
                  "," + std::to_string(std::max<std::size_t>(f.sp2, 1)) + "," + std::to_string(std::max<std::size_t>(f.tp, 1));
  }
  if (layout_text.empty()) layout_text = s.string("layout").value_or("");
  const bool verify = ctx.globals().verify || s.boolean("verify").value_or(false);
  const auto strategy = shift_strategy_from_string(
      !f.shift_strategy.empty() ? f.shift_strategy : s.string("shift_strategy").value_or("roll"));
  s.string("truth");
  s.string("out");
  s.reject_unknown();

  std::shared_ptr<const OneStepModel> model;
  std::shared_ptr<const DecomposedSwinForecaster> decomposed;
  DecompLayout layout;
  if (!layout_text.empty()) {
    layout = parse_layout(layout_text);
    if (model_json.value("kind", "") != "swin") {
      throw Error(ErrorCode::kInvalidArgument, "--layout requires a swin model");
    }
    auto swin = std::make_shared<const SwinForecaster>(swin_config_from_json(model_json), first.schema(), first.grid());
    decomposed = std::make_shared<const DecomposedSwinForecaster>(swin, layout, strategy, verify);
    model = decomposed;
  } else {
    if (verify) ctx.notice("--verify has no effect without --layout");
    model = model_from_json(model_json, first.schema(), first.grid());
  }

  const auto result = run_rollout(*model, truth, cfg);
  auto manifest = rollout_manifest(cfg, *model, truth, result);
  report::Bundle bundle(out);
  bundle.write("metrics.csv", metrics_csv(result.records));
  for (auto ic : result.dropped_ics) ctx.notice("IC t=" + std::to_string(ic) + " h dropped: final lead beyond truth window");
  for (const auto& d : result.diverged) {
    ctx.notice("IC t=" + std::to_string(d.ic_timestamp) + " h diverged at lead " + std::to_string(d.first_bad_lead) + " h");
  }
  if (decomposed) {
    const auto trace = decomposed->first_step_trace();
    const auto vol = comm_volume(trace);
    const auto grad = comm_volume(gradient_allreduce_trace(layout, decomposed->param_count()));
    manifest["decomposition"] = {{"layout", to_string(layout)},
                                 {"shift_strategy", std::string(to_string(strategy))},
                                 {"verified", verify},
                                 {"steps", decomposed->steps()},
                                 {"comm_per_step",
                                  {{"halo", vol.halo},
                                   {"roll", vol.roll},
                                   {"allreduce_partial", vol.allreduce_partial},
                                   {"allreduce_grad", grad.allreduce_grad}}}};
    if (verify) {
      manifest["decomposition"]["max_relative_deviation"] = decomposed->max_deviation();
      ctx.err() << "wxscale: decomposed forward max relative deviation " << io::format_double(decomposed->max_deviation())
                << " over " << decomposed->steps() << " steps\n";
    }
    bundle.write("comm_trace.jsonl", to_jsonl(trace));
  }
  bundle.write("rollout_manifest.json", manifest.dump(2) + "\n");
  bundle.add_input(fs::path(require_path(f.truth, s, "truth", "truth directory")) / "index.json");
  bundle.finish("rollout");
  ctx.out() << "wrote " << result.records.size() << " records for " << result.evaluated_ics.size() << " ICs to "
            << out.string() << '\n';
  return 0;
}

// ---- fit / derive / report ---------------------------------------------------

struct AnalysisFlags {
  std::string runs;
  std::string metrics;
  std::string covariates;
  double kappa = 0.0;
  std::size_t smooth = 0;
};

void write_fit(Context& ctx, report::Bundle& bundle, const Section& s, const AnalysisFlags& f,
               const std::vector<RunPoint>& runs, const std::vector<MetricRecord>& records) {
  SweepOptions opts;
  if (!f.covariates.empty()) {
    opts.covariates = parse_covariates(f.covariates);
  } else if (const auto* n = s.node("covariates")) {
    if (const auto* str = n->as_string()) {
      opts.covariates = parse_covariates(str->get());
    } else {
      opts.covariates.clear();
      for (const auto& c : s.strings("covariates").value()) opts.covariates.push_back(covariate_from_string(c));
    }
  }
  const auto kappa_cfg = s.number("kappa");
  opts.kappa = f.kappa > 0.0 ? f.kappa : kappa_cfg.value_or(kDefaultKappa);
  if (f.kappa <= 0.0 && !kappa_cfg) ctx.notice("fit kappa not set; using the default kappa = 6");
  opts.leads = s.integers("leads").value_or(std::vector<int>{});
  opts.channels = s.strings("channels").value_or(std::vector<std::string>{});
  opts.allocation_tolerance = s.number("allocation_tolerance").value_or(opts.allocation_tolerance);

  const auto result = sweep(runs, records, opts);
  bundle.write("fit_report.json", fit_report_json(result).dump(2) + "\n");

  for (auto cov : result.covariates) {
    const std::string c(to_string(cov));
    bundle.figure("heatmap_" + c + "_r2", report::FigureKind::kHeatmapUnit,
                  report::heatmap_csv(report::heatmap_from_sweep(result, cov, report::HeatmapField::kR2)),
                  "R2 of log-log fit vs " + c + " per lead and channel");
    bundle.figure("heatmap_" + c + "_slope", report::FigureKind::kHeatmap,
                  report::heatmap_csv(report::heatmap_from_sweep(result, cov, report::HeatmapField::kSlope)),
                  "Fitted exponent vs " + c + " per lead and channel");
  }

  const bool has_pooled = std::ranges::find(result.channels, std::string(kPooledChannel)) != result.channels.end();
  if (has_pooled) {
    report::CurveSet r2, slope;
    r2.x_label = slope.x_label = "lead_hours";
    for (int lead : result.leads) {
      r2.x.push_back(lead);
      slope.x.push_back(lead);
    }
    for (auto cov : result.covariates) {
      r2.names.emplace_back(to_string(cov));
      slope.names.emplace_back(to_string(cov));
      std::vector<double> yr, ys;
      for (int lead : result.leads) {
        const auto* fit = result.at(lead, std::string(kPooledChannel)).fit(cov);
        yr.push_back(fit ? fit->r2 : std::nan(""));
        ys.push_back(fit ? fit->slope : std::nan(""));
      }
      r2.ys.push_back(std::move(yr));
      slope.ys.push_back(std::move(ys));
    }
    bundle.figure("pooled_r2_vs_lead", report::FigureKind::kCurves, report::curves_csv(r2),
                  "Pooled RMSE: R2 of the frontier fit vs lead", "R2");
    bundle.figure("pooled_slope_vs_lead", report::FigureKind::kCurves, report::curves_csv(slope),
                  "Pooled RMSE: fitted exponent vs lead", "slope b");
  } else {
    ctx.notice("no __pooled__ channel in metrics; pooled curves skipped");
  }

  std::ostringstream alloc;
  alloc << "lead_hours,channel,status,alpha,beta,alpha_plus_beta,consistent\n";
  std::size_t failed = 0;
  for (const auto& cell : result.cells) {
    if (cell.status != "ok") ++failed;
    alloc << cell.lead_hours << ',' << cell.channel << ',' << cell.status;
    if (cell.allocation) {
      alloc << ',' << io::format_double(cell.allocation->alpha) << ',' << io::format_double(cell.allocation->beta)
            << ',' << io::format_double(cell.allocation->alpha_plus_beta) << ','
            << (cell.allocation->consistent ? "true" : "false") << '\n';
    } else {
      alloc << ",nan,nan,nan,false\n";
    }
  }
  bundle.write("allocation.csv", alloc.str());
  bundle.note("fit", {{"cells", result.cells.size()}, {"failed_cells", failed}, {"kappa", result.kappa}});

  const auto& summary_channel = has_pooled ? std::string(kPooledChannel) : result.channels.front();
  const auto& cell = result.at(result.leads.front(), summary_channel);
  ctx.out() << "fit " << result.cells.size() << " cells (" << failed << " failed)";
  if (cell.allocation) {
    ctx.out() << "; " << summary_channel << " at " << cell.lead_hours << " h: alpha=" << io::format_double(cell.allocation->alpha)
              << " beta=" << io::format_double(cell.allocation->beta);
  }
  ctx.out() << '\n';
}

void write_derive(Context& ctx, report::Bundle& bundle, std::size_t smooth,
                  const std::vector<MetricRecord>& records) {
  const auto growth = report::derive_error_growth(records, smooth);
  bundle.figure("error_growth", report::FigureKind::kPanels, report::panels_csv(growth, "d_rmse_dt"),
                "d(RMSE)/dt of IC-averaged area-weighted RMSE", "d RMSE / dt (per h)");

  std::vector<report::PanelSeries> mean;
  for (const auto& g : growth) mean.push_back({g.channel, g.unit, {}, {}});
  for (const auto& m : reduce_over_ics(records)) {
    auto it = std::ranges::find(mean, m.channel, &report::PanelSeries::channel);
    it->leads.push_back(m.lead_hours);
    it->values.push_back(m.mean_rmse);
  }
  bundle.figure("rmse_mean", report::FigureKind::kPanels, report::panels_csv(mean, "mean_rmse"),
                "IC-averaged area-weighted RMSE", "RMSE");
  bundle.note("derive", {{"averaging", "RMSE averaged over ICs per (lead, channel), then differentiated"},
                         {"scheme", "central differences inside, one-sided at the ends"},
                         {"smooth_window", smooth}});
  ctx.out() << "derived error growth for " << growth.size() << " channels\n";
}

std::vector<MetricRecord> load_metrics(const std::string& path) { return parse_metrics_csv(io::read_text(path)); }

std::size_t smooth_window(const AnalysisFlags& f, const Section& s) {
  const auto w = f.smooth > 0 ? static_cast<std::int64_t>(f.smooth) : s.integer("smooth").value_or(1);
  if (w < 1 || w % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "smoothing window must be odd and positive");
  return static_cast<std::size_t>(w);
}

int cmd_fit(Context& ctx, const AnalysisFlags& f) {
  const Section s = ctx.root().sub("fit");
  const fs::path out = ctx.output_dir(s);
  const auto runs_path = require_path(f.runs, s, "runs", "runs.csv");
  const auto metrics_path = require_path(f.metrics, s, "metrics", "metrics.csv");
  const auto runs = parse_runs_csv(io::read_text(runs_path));
  const auto records = load_metrics(metrics_path);
  report::Bundle bundle(out);
  bundle.add_input(runs_path);
  bundle.add_input(metrics_path);
  write_fit(ctx, bundle, s, f, runs, records);
  s.string("out");
  s.reject_unknown();
  bundle.finish("fit");
  return 0;
}

int cmd_derive(Context& ctx, const AnalysisFlags& f) {
  const Section s = ctx.root().sub("derive");
  const fs::path out = ctx.output_dir(s);
  const auto metrics_path = require_path(f.metrics, s, "metrics", "metrics.csv");
  const auto smooth = smooth_window(f, s);
  s.string("out");
  s.reject_unknown();
  const auto records = load_metrics(metrics_path);
  report::Bundle bundle(out);
  bundle.add_input(metrics_path);
  write_derive(ctx, bundle, smooth, records);
  bundle.finish("derive");
  return 0;
}

int cmd_report(Context& ctx, const AnalysisFlags& f) {
  const Section s = ctx.root().sub("report");
  const Section fit_s = ctx.root().sub("fit");
  const Section derive_s = ctx.root().sub("derive");
  const fs::path out = ctx.output_dir(s);
  const auto runs_path = require_path(f.runs, s, "runs", "runs.csv");
  const auto metrics_path = require_path(f.metrics, s, "metrics", "metrics.csv");
  const auto smooth = smooth_window(f, derive_s);
  const int box_lead = static_cast<int>(s.integer("box_lead_hours").value_or(kStepHours));
  const auto runs = parse_runs_csv(io::read_text(runs_path));
  const auto records = load_metrics(metrics_path);
  report::Bundle bundle(out);
  bundle.add_input(runs_path);
  bundle.add_input(metrics_path);
  write_fit(ctx, bundle, fit_s, f, runs, records);
  write_derive(ctx, bundle, smooth, records);
  bundle.figure("rmse_box_" + std::to_string(box_lead) + "h", report::FigureKind::kBox,
                report::box_csv(report::box_stats(records, box_lead)),
                "RMSE across runs and ICs at lead " + std::to_string(box_lead) + " h");
  for (const auto* sec : {&s, &fit_s, &derive_s}) {
    sec->string("out");
    sec->string("runs");
    sec->string("metrics");
  }
  s.reject_unknown();
  fit_s.reject_unknown();
  derive_s.reject_unknown();
  bundle.finish("report");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"wxscale: rollout evaluation and scaling-law analysis for weather forecasters"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML config file; flags override its values");
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "write into a non-empty output directory");
  app.add_flag("--verify", g.verify, "check decomposed forward passes against the sequential model");
  app.add_option("--layout", g.layout, "decomposition layout dp,sp1,sp2[,tp]");

  auto* synth = app.add_subcommand("synth", "generate a synthetic IsoFLOP dataset");
  RolloutFlags rf;
  auto* rollout = app.add_subcommand("rollout", "evaluate a model autoregressively against truth");
  rollout->add_option("--truth", rf.truth, "truth directory (index.json + field files)");
  rollout->add_option("--model", rf.model, "model JSON file (default: [model] table of the config)");
  rollout->add_option("--shift-strategy", rf.shift_strategy, "roll or halo");
  rollout->add_option("--max-lead", rf.max_lead, "maximum lead in hours");
  rollout->add_option("--max-ics", rf.max_ics, "evaluate at most this many ICs");
  rollout->add_option("--workers", rf.workers, "worker threads over ICs");
  rollout->add_option("--dp", rf.dp, "data-parallel replicas");
  rollout->add_option("--sp1", rf.sp1, "latitude subdomains");
  rollout->add_option("--sp2", rf.sp2, "longitude subdomains");
  rollout->add_option("--tp", rf.tp, "attention/MLP shards");

  AnalysisFlags af;
  auto* fit = app.add_subcommand("fit", "two-stage IsoFLOP fits per lead and channel");
  auto* derive = app.add_subcommand("derive", "error-growth curves from metrics.csv");
  auto* rep = app.add_subcommand("report", "fit + derive + RMSE box plot in one bundle");
  for (auto* sub : {fit, rep}) {
    sub->add_option("--runs", af.runs, "runs.csv");
    sub->add_option("--covariate", af.covariates, "comma-separated: params,data,compute");
    sub->add_option("--kappa", af.kappa, "cost-model constant in C = kappa N D");
  }
  for (auto* sub : {fit, derive, rep}) sub->add_option("--metrics", af.metrics, "metrics.csv");
  for (auto* sub : {derive, rep}) sub->add_option("--smooth", af.smooth, "odd moving-average window");
  for (auto* sub : {synth, rollout, fit, derive, rep}) sub->fallthrough();

  std::vector<std::string> argv_store{"wxscale"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_code(ErrorCode::kInvalidArgument);
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    Context ctx(g, out, err);
    if (synth->parsed()) return cmd_synth(ctx);
    if (rollout->parsed()) return cmd_rollout(ctx, rf);
    if (fit->parsed()) return cmd_fit(ctx, af);
    if (derive->parsed()) return cmd_derive(ctx, af);
    if (rep->parsed()) return cmd_report(ctx, af);
  } catch (const Error& e) {
    err << "wxscale: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "wxscale: error [io]: " << e.what() << '\n';
    return exit_code(ErrorCode::kIo);
  } catch (const std::exception& e) {
    err << "wxscale: internal error: " << e.what() << '\n';
    return 1;
  }
  return exit_code(ErrorCode::kInvalidArgument);
}

}  // namespace wxscale
