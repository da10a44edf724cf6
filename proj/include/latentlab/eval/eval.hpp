#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/model/unembed.hpp"
#include "latentlab/steer/steer.hpp"
#include "latentlab/training/rollout.hpp"

namespace latentlab {

enum class Method {
  Original,
  MaskPrompt,
  BlankPrompt,
  BlankPlusLatent,
  UnembeddedPrompt,
  Vanilla,
  PromptSwitch,
  TLI,
  TEI_TLI,
  TLI_blank,
  LayerAblation,
  ExplicitPrompt,
};

inline std::string method_name(Method m, int layer = 0) {
  switch (m) {
    case Method::Original: return "original";
    case Method::MaskPrompt: return "mask_prompt";
    case Method::BlankPrompt: return "blank_prompt";
    case Method::BlankPlusLatent: return "blank_plus_latent";
    case Method::UnembeddedPrompt: return "unembedded_prompt_l" + std::to_string(layer);
    case Method::Vanilla: return "vanilla";
    case Method::PromptSwitch: return "prompt_switch";
    case Method::TLI: return "tli";
    case Method::TEI_TLI: return "tei_tli";
    case Method::TLI_blank: return "tli_blank";
    case Method::LayerAblation: return "tli_layer" + std::to_string(layer);
    case Method::ExplicitPrompt: return "explicit_prompt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  static const std::map<std::string, Method> names = {
      {"original", Method::Original},        {"mask_prompt", Method::MaskPrompt},
      {"blank_prompt", Method::BlankPrompt}, {"blank_plus_latent", Method::BlankPlusLatent},
      {"unembedded_prompt", Method::UnembeddedPrompt}, {"vanilla", Method::Vanilla},
      {"prompt_switch", Method::PromptSwitch}, {"tli", Method::TLI},
      {"tei_tli", Method::TEI_TLI},          {"tli_blank", Method::TLI_blank},
      {"layer_ablation", Method::LayerAblation}, {"explicit_prompt", Method::ExplicitPrompt}};
  auto it = names.find(s);
  if (it == names.end()) throw UsageError("unknown evaluation method '" + s + "'");
  return it->second;
}

struct EvalJob {
  const TaskSuite* suite = nullptr;
  Method method = Method::Original;
  int layer = 0;  // UnembeddedPrompt / LayerAblation
  int runs = 10;
  std::uint64_t seed = 0;
  std::map<std::string, PromptTokens> prompts = {};  // ExplicitPrompt, by task id
};

/// Latents keyed by task id.
class LatentStore {
 public:
  void put(std::shared_ptr<const TextLatent> t) { map_[t->task_id] = std::move(t); }
  bool has(const std::string& id) const { return map_.count(id) > 0; }
  std::shared_ptr<const TextLatent> get(const std::string& id) const {
    auto it = map_.find(id);
    if (it == map_.end()) throw ConfigError("no latent for task " + id);
    return it->second;
  }
  std::size_t size() const { return map_.size(); }
  std::string fingerprint() const {
    Fnv1a h;
    for (const auto& [id, t] : map_) h.str(id).values<double>(t->tensor.span());
    return h.hex();
  }
  const std::map<std::string, std::shared_ptr<const TextLatent>>& all() const { return map_; }

 private:
  std::map<std::string, std::shared_ptr<const TextLatent>> map_;
};

struct EvalContext {
  const PolicyModel<float>* model = nullptr;
  const LatentStore* latents = nullptr;
  std::map<std::string, const TaskSpec*> base_tasks;  // parent lookup for extrapolated tasks
  std::map<std::string, int> lambda_by_family;         // default lambda per base suite
  int default_lambda = 20;
  RolloutOptions rollout;
  int workers = 1;
  bool keep_traces = false;

  void add_base_suite(const TaskSuite& s) {
    for (const auto& t : s.tasks) base_tasks[t.task_id] = &t;
  }
  int lambda_for(const TaskSpec& t) const {
    auto it = lambda_by_family.find(t.family);
    return resolve_lambda(t, it == lambda_by_family.end() ? default_lambda : it->second);
  }
  const TaskSpec& parent(const TaskSpec& t, std::size_t k) const {
    if (t.parents.size() != 2) throw ConfigError("task " + t.task_id + " has no parent pair");
    auto it = base_tasks.find(t.parents[k]);
    if (it == base_tasks.end()) throw ConfigError("parent task " + t.parents[k] + " of " + t.task_id + " is unknown");
    return *it->second;
  }
};

struct TaskResult {
  std::string task_id;
  int runs = 0;
  int successes = 0;
};

struct EvalReport {
  std::string suite;
  std::string method;
  std::vector<TaskResult> tasks;
  int successes = 0;
  int episodes = 0;
  std::string error;  // non-empty if the job could not run
  std::vector<Episode> traces;

  double rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
  bool ok() const { return error.empty(); }
};

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i; (i = next++) < n;) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// The intervention a method applies to one task (nullopt = plain prompt).
inline std::optional<InterventionConfig> method_intervention(const EvalContext& ctx, Method m, int layer,
                                                             const TaskSpec& task) {
  const auto& vocab = ctx.model->vocab();
  auto need_latents = [&] {
    if (!ctx.latents) throw ConfigError(method_name(m, layer) + " needs latents");
    return ctx.latents;
  };
  InterventionConfig c;
  switch (m) {
    case Method::Original:
    case Method::Vanilla: return std::nullopt;
    case Method::ExplicitPrompt: throw ConfigError("explicit prompts are supplied per job");
    case Method::MaskPrompt: c.target = TargetPrompt::Mask; return c;
    case Method::BlankPrompt: c.target = TargetPrompt::Blank; return c;
    case Method::BlankPlusLatent:
      c.mode = InterventionMode::LatentAdd;
      c.latent1 = need_latents()->get(task.task_id);
      c.target = TargetPrompt::Blank;
      return c;
    case Method::UnembeddedPrompt: {
      auto t = need_latents()->get(task.task_id);
      c.target = TargetPrompt::Explicit;
      c.explicit_prompt = unembed(t->layer(layer), ctx.model->embedding_table());
      return c;
    }
    case Method::PromptSwitch:
    case Method::TLI:
    case Method::TEI_TLI:
    case Method::TLI_blank:
    case Method::LayerAblation: {
      const TaskSpec& a = ctx.parent(task, 0);
      const TaskSpec& b = ctx.parent(task, 1);
      c.lambda = ctx.lambda_for(task);
      if (m == Method::PromptSwitch || m == Method::TEI_TLI) {
        c.prompt1 = vocab.tokenize(a.prompt);
        c.prompt2 = vocab.tokenize(b.prompt);
      }
      if (m == Method::PromptSwitch) {
        c.mode = InterventionMode::PromptSwitch;
        return c;
      }
      c.latent1 = need_latents()->get(a.task_id);
      c.latent2 = need_latents()->get(b.task_id);
      c.mode = m == Method::TEI_TLI     ? InterventionMode::TEI_TLI
               : m == Method::TLI_blank ? InterventionMode::TLI_blank
                                        : InterventionMode::TLI;
      if (m == Method::LayerAblation) c.active_layers = {layer};
      return c;
    }
  }
  return std::nullopt;
}

/// Runs every (task, run) episode of one job; success counts are exact.
inline EvalReport run_job(const EvalContext& ctx, const EvalJob& job) {
  if (!job.suite) throw ConfigError("evaluation job without a suite");
  if (job.runs < 1) throw ConfigError("evaluation job needs at least one run");
  EvalReport rep;
  rep.suite = job.suite->name;
  rep.method = method_name(job.method, job.layer);
  const auto& tasks = job.suite->tasks;
  std::vector<std::optional<InterventionConfig>> ivs;
  try {
    for (const auto& t : tasks) {
      if (job.method == Method::ExplicitPrompt) {
        auto it = job.prompts.find(t.task_id);
        if (it == job.prompts.end()) throw ConfigError("no explicit prompt for task " + t.task_id);
        InterventionConfig c;
        c.target = TargetPrompt::Explicit;
        c.explicit_prompt = it->second;
        ivs.push_back(c);
        continue;
      }
      ivs.push_back(method_intervention(ctx, job.method, job.layer, t));
      if (ivs.back()) ivs.back()->validate(ctx.model->config().hook_layers());
    }
  } catch (const ConfigError& e) {
    rep.error = e.what();
    return rep;
  }
  const std::size_t R = static_cast<std::size_t>(job.runs);
  std::vector<Episode> eps(tasks.size() * R);
  RolloutOptions opt = ctx.rollout;
  opt.start_jitter = job.suite->start_jitter;
  parallel_for(eps.size(), ctx.workers, [&](std::size_t k) {
    const std::size_t ti = k / R, r = k % R;
    const auto& iv = ivs[ti];
    eps[k] = rollout(*ctx.model, tasks[ti], iv ? &*iv : nullptr, job.seed, r, opt);
  });
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    TaskResult tr{tasks[ti].task_id, job.runs, 0};
    for (std::size_t r = 0; r < R; ++r) tr.successes += eps[ti * R + r].success ? 1 : 0;
    rep.successes += tr.successes;
    rep.episodes += tr.runs;
    rep.tasks.push_back(tr);
  }
  if (ctx.keep_traces) rep.traces = std::move(eps);
  return rep;
}

/// Executes jobs in order; a job whose prerequisites are missing reports
/// its error and the remaining jobs still run.
inline std::vector<EvalReport> run_matrix(const EvalContext& ctx, const std::vector<EvalJob>& jobs) {
  std::vector<EvalReport> out;
  for (const auto& j : jobs) out.push_back(run_job(ctx, j));
  return out;
}

struct AblationCurve {
  std::vector<std::pair<int, EvalReport>> per_layer;
  EvalReport all_layers;
};

/// TLI restricted to one hook layer at a time, plus the all-layer reference.
inline AblationCurve layer_ablation(const EvalContext& ctx, const TaskSuite& ood, int runs, std::uint64_t seed) {
  AblationCurve c;
  for (int l = 1; l <= ctx.model->config().hook_layers(); ++l)
    c.per_layer.push_back({l, run_job(ctx, {&ood, Method::LayerAblation, l, runs, seed})});
  c.all_layers = run_job(ctx, {&ood, Method::TLI, 0, runs, seed});
  return c;
}

}  // namespace latentlab
