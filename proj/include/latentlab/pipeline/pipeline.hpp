#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/eval/attribution.hpp"
#include "latentlab/eval/diagnostics.hpp"
#include "latentlab/eval/eval.hpp"
#include "latentlab/eval/report.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/model/checkpoint.hpp"
#include "latentlab/training/demos.hpp"
#include "latentlab/training/rollout.hpp"
#include "latentlab/training/train.hpp"
#include "latentlab/world/manifest.hpp"

namespace latentlab {

/// Everything needed to regenerate every artifact of an experiment.
struct RunConfig {
  std::uint64_t seed = 7;
  int goal_tasks = 10;
  int object_tasks = 10;
  int spatial_tasks = 10;
  int ood_tasks = 20;
  double swap_fraction = 0.2;
  ModelConfig model;
  TrainConfig train;
  int eval_runs = 10;
  int train_eval_runs = 2;
  Cell displacement{-3, 0};
  int unembed_layer = 1;
  std::vector<int> heatmap_timesteps = {0, 3, 6, 9};
  int workers = 0;  // 0 = all cores

  void validate() const {
    if (goal_tasks < 2 || object_tasks < 2 || spatial_tasks < 2 || ood_tasks < 1 || eval_runs < 1 ||
        train_eval_runs < 1)
      throw ConfigError("run config: task and run counts must be positive (at least 2 tasks per base suite)");
    if (swap_fraction < 0 || swap_fraction > 1) throw ConfigError("run config: swap_fraction must be in [0,1]");
    model.validate();
    train.validate();
    if (unembed_layer < 1 || unembed_layer > model.hook_layers()) throw ConfigError("run config: bad unembed_layer");
  }
  int worker_count() const { return workers > 0 ? workers : default_workers(); }
};

inline Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["goal_tasks"] = c.goal_tasks;
  j["object_tasks"] = c.object_tasks;
  j["spatial_tasks"] = c.spatial_tasks;
  j["ood_tasks"] = c.ood_tasks;
  j["swap_fraction"] = c.swap_fraction;
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["eval_runs"] = c.eval_runs;
  j["train_eval_runs"] = c.train_eval_runs;
  j["displacement"] = {c.displacement.x, c.displacement.y};
  j["unembed_layer"] = c.unembed_layer;
  j["heatmap_timesteps"] = c.heatmap_timesteps;
  j["workers"] = c.workers;
  return j;
}

/// Missing keys keep their defaults, so a config file may list only overrides.
inline RunConfig run_config_from_json(const Json& j) {
  try {
    RunConfig c;
    auto reject_unknown = [](const Json& given, const Json& known, const std::string& where) {
      for (const auto& [k, v] : given.items())
        if (!known.contains(k)) throw ConfigError("run config: unknown key '" + where + k + "'");
    };
    const Json known = to_json(c);
    reject_unknown(j, known, "");
    if (j.contains("model")) reject_unknown(j.at("model"), known.at("model"), "model.");
    if (j.contains("train")) reject_unknown(j.at("train"), known.at("train"), "train.");
    c.seed = j.value("seed", c.seed);
    c.goal_tasks = j.value("goal_tasks", c.goal_tasks);
    c.object_tasks = j.value("object_tasks", c.object_tasks);
    c.spatial_tasks = j.value("spatial_tasks", c.spatial_tasks);
    c.ood_tasks = j.value("ood_tasks", c.ood_tasks);
    c.swap_fraction = j.value("swap_fraction", c.swap_fraction);
    if (j.contains("model")) {
      Json m = to_json(c.model);
      m.update(j.at("model"));
      c.model = model_config_from_json(m);
    }
    if (j.contains("train")) {
      Json t = to_json(c.train);
      t.update(j.at("train"));
      c.train = train_config_from_json(t);
    }
    c.eval_runs = j.value("eval_runs", c.eval_runs);
    c.train_eval_runs = j.value("train_eval_runs", c.train_eval_runs);
    if (j.contains("displacement")) c.displacement = {j.at("displacement").at(0).get<int>(), j.at("displacement").at(1).get<int>()};
    c.unembed_layer = j.value("unembed_layer", c.unembed_layer);
    c.heatmap_timesteps = j.value("heatmap_timesteps", c.heatmap_timesteps);
    c.workers = j.value("workers", c.workers);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

/// The parts of the config that determine artifacts (worker count excluded).
inline std::string config_fingerprint(const RunConfig& c) {
  Json j = to_json(c);
  j.erase("workers");
  return Fnv1a().str(j.dump()).hex();
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view what) { return Rng(seed).split(what).next_u64(); }

/// Directory layout of one experiment.
struct Workspace {
  std::filesystem::path root;

  static std::filesystem::path default_root() {
    if (const char* env = std::getenv("LATENTLAB_WORKSPACE"); env && *env) return env;
    return "latentlab-workspace";
  }

  std::filesystem::path config() const { return root / "run.json"; }
  std::filesystem::path suite(const std::string& name) const { return root / "suites" / (name + ".json"); }
  std::filesystem::path dataset() const { return root / "demos" / "train.json"; }
  std::filesystem::path checkpoint() const { return root / "checkpoints" / "policy.ckpt"; }
  std::filesystem::path checkpoint_dir() const { return root / "checkpoints"; }
  std::filesystem::path train_log() const { return root / "logs" / "train.csv"; }
  std::filesystem::path latent(const std::string& task_id) const { return root / "latents" / (task_id + ".lat"); }
  std::filesystem::path reports() const { return root / "reports"; }
};

inline const std::vector<std::string>& base_suite_names() {
  static const std::vector<std::string> n = {"goal", "object", "spatial"};
  return n;
}

/// Throws MissingArtifactError naming the path and the command that makes it.
inline void require_artifact(const std::filesystem::path& p, const std::string& producer) {
  if (!std::filesystem::exists(p))
    throw MissingArtifactError("missing artifact " + p.string() + " (run '" + producer + "' first)");
}

/// Logging sink for progress messages (stderr by default).
using LogFn = std::function<void(const std::string&)>;
inline void log_stderr(const std::string& s) { std::fprintf(stderr, "[latentlab] %s\n", s.c_str()); }

/// Loads, creates or reuses the artifacts of one experiment. Each stage is
/// skipped when its output already exists and `force` is false.
class Pipeline {
 public:
  Pipeline(Workspace ws, RunConfig cfg, LogFn log = log_stderr) : ws_(std::move(ws)), cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.validate();
  }

  const Workspace& workspace() const { return ws_; }
  const RunConfig& config() const { return cfg_; }
  Json provenance() const { return {{"config", to_json(cfg_)}, {"config_fingerprint", config_fingerprint(cfg_)}}; }

  /// Writes run.json; refuses to reuse a workspace built from another config.
  void init(bool force) {
    if (std::filesystem::exists(ws_.config()) && !force) {
      const auto have = run_config_from_json(Json::parse(read_text_file(ws_.config())));
      if (config_fingerprint(have) != config_fingerprint(cfg_))
        throw VerificationError("workspace " + ws_.root.string() + " was created with a different run config " +
                                "(use --force to overwrite)");
      return;
    }
    write_text_file(ws_.config(), to_json(cfg_).dump(2) + "\n");
  }

  // ---- suites ---------------------------------------------------------------
  TaskSuite make_base_suite(const std::string& name) const {
    const SuiteTag tag = parse_tag(name);
    const int n = tag == SuiteTag::Goal ? cfg_.goal_tasks : tag == SuiteTag::Object ? cfg_.object_tasks : cfg_.spatial_tasks;
    return generate_suite(tag, derive_seed(cfg_.seed, name), n);
  }

  void build_suites(bool force) {
    for (const auto& name : base_suite_names())
      if (force || !std::filesystem::exists(ws_.suite(name))) {
        save_suite(make_base_suite(name), ws_.suite(name), provenance());
        suites_.erase(name);
        log_("wrote " + ws_.suite(name).string());
      }
    if (force || !std::filesystem::exists(ws_.suite("ood"))) {
      std::vector<TaskSuite> bases;
      for (const auto& name : base_suite_names()) bases.push_back(suite(name));
      auto ood = generate_ood_suite(bases, derive_seed(cfg_.seed, "ood"), cfg_.ood_tasks, {cfg_.swap_fraction});
      save_suite(ood, ws_.suite("ood"), provenance());
      suites_.erase("ood");
      log_("wrote " + ws_.suite("ood").string());
    }
  }

  const TaskSuite& suite(const std::string& name) {
    auto it = suites_.find(name);
    if (it != suites_.end()) return *it->second;
    require_artifact(ws_.suite(name), "latentlab suite all");
    auto s = std::make_unique<TaskSuite>(load_suite(ws_.suite(name)));
    return *(suites_[name] = std::move(s));
  }

  std::vector<const TaskSuite*> base_suites() {
    std::vector<const TaskSuite*> v;
    for (const auto& n : base_suite_names()) v.push_back(&suite(n));
    return v;
  }

  // ---- demonstrations -----------------------------------------------------
  void build_demos(bool force) {
    if (!force && std::filesystem::exists(ws_.dataset())) return;
    DemoDataset ds;
    for (const auto* s : base_suites())
      ds.append(collect_demos(*s, cfg_.train.demos_per_task, derive_seed(cfg_.seed, "demos")));
    ds.seed = derive_seed(cfg_.seed, "demos");
    save_dataset(ds, ws_.dataset(), provenance());
    log_("wrote " + ws_.dataset().string() + " (" + std::to_string(ds.episodes.size()) + " episodes, " +
         std::to_string(ds.sample_count()) + " samples)");
    dataset_.reset();
  }

  const DemoDataset& dataset() {
    if (!dataset_) require_artifact(ws_.dataset(), "latentlab demos");
    if (!dataset_) dataset_ = std::make_unique<DemoDataset>(load_dataset(ws_.dataset(), base_suites()));
    return *dataset_;
  }

  // ---- training -------------------------------------------------------------
  double in_distribution_success(const PolicyModel<float>& m, int runs, std::uint64_t seed) {
    EvalContext ctx = context(m, nullptr);
    int ok = 0, n = 0;
    for (const auto* s : base_suites()) {
      auto r = run_job(ctx, {s, Method::Original, 0, runs, seed});
      ok += r.successes;
      n += r.episodes;
    }
    return n ? static_cast<double>(ok) / n : 0.0;
  }

  void build_model(bool force) {
    if (!force && std::filesystem::exists(ws_.checkpoint())) return;
    ModelConfig mc = cfg_.model;
    mc.seed = derive_seed(cfg_.seed, "init");
    PolicyModel<float> m(mc, Vocabulary());
    TrainOutputs out;
    out.log_csv = ws_.train_log();
    out.checkpoint_dir = ws_.checkpoint_dir();
    out.provenance = provenance();
    const std::uint64_t eval_seed = derive_seed(cfg_.seed, "train-eval");
    out.evaluate = [&](const PolicyModel<float>& mm) { return in_distribution_success(mm, cfg_.train_eval_runs, eval_seed); };
    out.on_log = [&](const TrainLogRow& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "train step %d lr %.2g loss %.4f%s", r.step, r.lr, r.loss,
                    r.eval_success ? (" success " + format_rate(*r.eval_success)).c_str() : "");
      log_(buf);
    };
    TrainConfig tc = cfg_.train;
    tc.seed = derive_seed(cfg_.seed, "train");
    auto res = train(m, dataset(), tc, out);
    Json meta = provenance();
    meta["train_config"] = to_json(tc);
    meta["dataset_fingerprint"] = dataset_fingerprint(dataset());
    if (res.final_success) meta["final_success"] = *res.final_success;
    save_checkpoint(m, ws_.checkpoint(), meta);
    log_("wrote " + ws_.checkpoint().string());
    model_.reset();
  }

  const PolicyModel<float>& model() {
    if (!model_) {
      require_artifact(ws_.checkpoint(), "latentlab train");
      CheckpointInfo info;
      model_ = std::make_unique<PolicyModel<float>>(load_checkpoint<float>(ws_.checkpoint(), &info));
      model_fp_ = model_fingerprint(*model_);
      if (!info.fingerprint.empty() && info.fingerprint != model_fp_)
        throw FingerprintError(ws_.checkpoint().string() + ": stored fingerprint does not match its weights");
    }
    return *model_;
  }
  const std::string& model_fp() {
    model();
    return model_fp_;
  }

  // ---- latents ----------------------------------------------------------------
  void build_latents(bool force, const std::vector<std::string>& only = {}) {
    const auto& m = model();
    for (const auto* s : base_suites())
      for (const auto& t : s->tasks) {
        if (!only.empty() && std::find(only.begin(), only.end(), t.task_id) == only.end()) continue;
        if (!force && std::filesystem::exists(ws_.latent(t.task_id))) continue;
        TextLatent lat = extract_latent(m, t, dataset().episodes_of(t.task_id));
        lat.provenance = provenance();
        save_latent(lat, ws_.latent(t.task_id));
      }
    latents_.reset();
  }

  const LatentStore& latents() {
    if (!latents_) {
      latents_ = std::make_unique<LatentStore>();
      for (const auto* s : base_suites())
        for (const auto& t : s->tasks) {
          if (!std::filesystem::exists(ws_.latent(t.task_id))) continue;
          auto lat = std::make_shared<TextLatent>(load_latent(ws_.latent(t.task_id)));
          check_fingerprint(*lat, model_fp());
          latents_->put(std::move(lat));
        }
    }
    return *latents_;
  }

  // ---- evaluation -------------------------------------------------------------
  EvalContext context(const PolicyModel<float>& m, const LatentStore* lat) {
    EvalContext ctx;
    ctx.model = &m;
    ctx.latents = lat;
    ctx.workers = cfg_.worker_count();
    for (const auto* s : base_suites()) {
      ctx.add_base_suite(*s);
      std::vector<std::size_t> lens;
      for (const auto& t : s->tasks)
        for (const auto& ep : dataset().episodes_of(t.task_id)) lens.push_back(ep.steps.size());
      if (!lens.empty()) ctx.lambda_by_family[s->name] = default_lambda(lens);
    }
    ctx.default_lambda = default_lambda(dataset().episode_lengths());
    return ctx;
  }

  EvalContext context() { return context(model(), &latents()); }

  std::uint64_t eval_seed() const { return derive_seed(cfg_.seed, "eval"); }

  ReportStamp stamp() {
    return {model_fp(), latents().fingerprint(), config_fingerprint(cfg_), cfg_.seed};
  }

 private:
  Workspace ws_;
  RunConfig cfg_;
  LogFn log_;
  std::map<std::string, std::unique_ptr<TaskSuite>> suites_;
  std::unique_ptr<DemoDataset> dataset_;
  std::unique_ptr<PolicyModel<float>> model_;
  std::string model_fp_;
  std::unique_ptr<LatentStore> latents_;
};

/// The full experiment matrix over a prepared workspace.
struct ExperimentResults {
  ReportBundle bundle;
  std::map<std::string, EvalReport> by_key;  // "suite/method"

  const EvalReport& get(const std::string& suite, const std::string& method) const {
    auto it = by_key.find(suite + "/" + method);
    if (it == by_key.end()) throw ConfigError("no report for " + suite + "/" + method);
    return it->second;
  }
};

inline ExperimentResults run_experiments(Pipeline& p, const LogFn& log = log_stderr) {
  auto ctx = p.context();
  const auto& cfg = p.config();
  const int runs = cfg.eval_runs;
  const std::uint64_t seed = p.eval_seed();
  std::vector<EvalJob> jobs;
  for (const auto* s : p.base_suites())
    for (Method m : {Method::Original, Method::MaskPrompt, Method::BlankPrompt, Method::BlankPlusLatent})
      jobs.push_back({s, m, 0, runs, seed});
  for (const auto* s : p.base_suites()) jobs.push_back({s, Method::UnembeddedPrompt, cfg.unembed_layer, runs, seed});
  const TaskSuite& ood = p.suite("ood");
  for (Method m : {Method::Vanilla, Method::PromptSwitch, Method::TLI, Method::TEI_TLI, Method::TLI_blank})
    jobs.push_back({&ood, m, 0, runs, seed});

  ExperimentResults out;
  for (const auto& j : jobs) {
    auto r = run_job(ctx, j);
    log(r.suite + "/" + r.method + ": " + (r.ok() ? std::to_string(r.successes) + "/" + std::to_string(r.episodes) : "error: " + r.error));
    out.by_key[r.suite + "/" + r.method] = r;
    out.bundle.reports.push_back(std::move(r));
  }
  out.bundle.ablation = layer_ablation(ctx, ood, runs, seed);
  for (const auto& [l, r] : out.bundle.ablation->per_layer) log("ood/tli layer " + std::to_string(l) + ": " + std::to_string(r.successes) + "/" + std::to_string(r.episodes));

  const TaskSuite& obj = p.suite("object");
  out.bundle.two_prompt = two_prompt_eval(ctx, obj, runs, seed);
  log("object/two_prompt: " + std::to_string(out.bundle.two_prompt->report.successes) + "/" + std::to_string(out.bundle.two_prompt->report.episodes));
  auto pos = ood_position_eval(ctx, obj, cfg.displacement, runs, seed);
  pos.report.method = "ood_position";
  log("object/ood_position: " + std::to_string(pos.report.successes) + "/" + std::to_string(pos.report.episodes) +
      ", trained-location " + format_rate(pos.policy.fraction(Approach::TrainedLocation)));
  out.by_key[pos.report.suite + "/ood_position"] = pos.report;
  out.bundle.reports.push_back(pos.report);
  out.bundle.diagnostic = pos.policy;
  out.bundle.oracle_diagnostic = pos.oracle;

  // attribution of the first object-style task on its first demonstration
  const TaskSpec& t = obj.tasks.front();
  const auto demos = p.dataset().episodes_of(t.task_id);
  std::vector<int> ts;
  for (int k : cfg.heatmap_timesteps)
    if (!demos.empty() && k >= 0 && static_cast<std::size_t>(k) < demos.front().steps.size()) ts.push_back(k);
  if (!demos.empty()) {
    auto grids = attribution_heatmap(p.model(), t, *p.latents().get(t.task_id), demos.front(), ts);
    for (const auto& g : grids) out.bundle.heatmaps.push_back({"heatmap_" + t.task_id + "_t" + std::to_string(g.timestep), g});
  }
  return out;
}

}  // namespace latentlab
