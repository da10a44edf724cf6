#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/latent/latent.hpp"
#include "latentlab/model/checkpoint.hpp"
#include "latentlab/model/policy.hpp"

namespace latentlab {

enum class InterventionMode { None, LatentAdd, TEI, TLI, TEI_TLI, TLI_blank, PromptSwitch };

/// Which prompt the policy reads while an intervention runs.
enum class TargetPrompt { Task, Blank, Mask, Stitched, Explicit };

inline std::string mode_name(InterventionMode m) {
  switch (m) {
    case InterventionMode::None: return "none";
    case InterventionMode::LatentAdd: return "latent_add";
    case InterventionMode::TEI: return "tei";
    case InterventionMode::TLI: return "tli";
    case InterventionMode::TEI_TLI: return "tei_tli";
    case InterventionMode::TLI_blank: return "tli_blank";
    case InterventionMode::PromptSwitch: return "prompt_switch";
  }
  return "?";
}

inline InterventionMode parse_mode(const std::string& s) {
  for (auto m : {InterventionMode::None, InterventionMode::LatentAdd, InterventionMode::TEI, InterventionMode::TLI,
                 InterventionMode::TEI_TLI, InterventionMode::TLI_blank, InterventionMode::PromptSwitch})
    if (mode_name(m) == s) return m;
  throw UsageError("unknown intervention mode '" + s + "'");
}

inline std::string target_name(TargetPrompt t) {
  switch (t) {
    case TargetPrompt::Task: return "task";
    case TargetPrompt::Blank: return "blank";
    case TargetPrompt::Mask: return "mask";
    case TargetPrompt::Stitched: return "stitched";
    case TargetPrompt::Explicit: return "explicit";
  }
  return "?";
}

inline TargetPrompt parse_target(const std::string& s) {
  for (auto t : {TargetPrompt::Task, TargetPrompt::Blank, TargetPrompt::Mask, TargetPrompt::Stitched,
                 TargetPrompt::Explicit})
    if (target_name(t) == s) return t;
  throw UsageError("unknown target prompt policy '" + s + "'");
}

inline bool needs_two_latents(InterventionMode m) {
  return m == InterventionMode::TLI || m == InterventionMode::TEI_TLI || m == InterventionMode::TLI_blank;
}
inline bool needs_two_prompts(InterventionMode m) {
  return m == InterventionMode::TEI || m == InterventionMode::TEI_TLI || m == InterventionMode::PromptSwitch;
}

/// min(i / lambda, 1).
inline double alpha(int i, int lambda) {
  if (lambda < 1) throw ConfigError("lambda must be at least 1, got " + std::to_string(lambda));
  if (i < 0) throw ConfigError("timestep must be non-negative");
  return i >= lambda ? 1.0 : static_cast<double>(i) / static_cast<double>(lambda);
}

/// (1 - a) e1 + a e2 after fitting both to `target_len` tokens.
template <class T>
Tensor<T> tei_blend(const Tensor<T>& e1, const Tensor<T>& e2, double a, std::size_t target_len) {
  if (e1.rank() != 2 || e2.rank() != 2 || e1.dim(1) != e2.dim(1))
    throw ConfigError("tei_blend width mismatch: " + shape_str(e1.shape()) + " vs " + shape_str(e2.shape()));
  const std::size_t d = e1.dim(1);
  const T w1 = static_cast<T>(1.0 - a), w2 = static_cast<T>(a);
  Tensor<T> out({target_len, d});
  for (std::size_t i = 0; i < target_len; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T x = i < e1.dim(0) ? e1(i, j) : T{};
      const T y = i < e2.dim(0) ? e2(i, j) : T{};
      out(i, j) = w1 * x + w2 * y;
    }
  return out;
}

namespace detail {
inline std::vector<int> resolve_layers(const std::vector<int>& active, std::size_t layers) {
  if (active.empty()) {
    std::vector<int> all;
    for (std::size_t l = 1; l <= layers; ++l) all.push_back(static_cast<int>(l));
    return all;
  }
  for (int l : active)
    if (l < 1 || static_cast<std::size_t>(l) > layers)
      throw InterventionError("active layer " + std::to_string(l) + " outside 1.." + std::to_string(layers));
  return active;
}
}  // namespace detail

/// Coefficient of (T1 - T2) in the interpolation edit.
inline double tli_coefficient(double a) { return (1.0 - a) - a; }

/// h + (1 - 2a)(T1 - T2) on the active layers; `h`, `t1`, `t2` are
/// [(L-1) x |T| x d]. An empty layer list means every layer.
template <class T>
Tensor<T> tli_edit(const Tensor<T>& h, const Tensor<T>& t1, const Tensor<T>& t2, double a,
                   const std::vector<int>& active_layers = {}) {
  if (h.shape() != t1.shape() || h.shape() != t2.shape())
    throw InterventionError("tli_edit shape mismatch: h " + shape_str(h.shape()) + ", latents " +
                            shape_str(t1.shape()) + " / " + shape_str(t2.shape()));
  const auto layers = detail::resolve_layers(active_layers, h.dim(0));
  const T c = static_cast<T>(tli_coefficient(a));
  Tensor<T> out = h;
  const std::size_t n = h.dim(1) * h.dim(2);
  for (int l : layers) {
    const std::size_t base = static_cast<std::size_t>(l - 1) * n;
    for (std::size_t k = 0; k < n; ++k) out[base + k] += c * (t1[base + k] - t2[base + k]);
  }
  return out;
}

/// h + T on the active layers.
template <class T>
Tensor<T> latent_add_edit(const Tensor<T>& h, const Tensor<T>& t, const std::vector<int>& active_layers = {}) {
  if (h.shape() != t.shape())
    throw InterventionError("latent_add_edit shape mismatch: h " + shape_str(h.shape()) + ", latent " +
                            shape_str(t.shape()));
  const auto layers = detail::resolve_layers(active_layers, h.dim(0));
  Tensor<T> out = h;
  const std::size_t n = h.dim(1) * h.dim(2);
  for (int l : layers) {
    const std::size_t base = static_cast<std::size_t>(l - 1) * n;
    for (std::size_t k = 0; k < n; ++k) out[base + k] += t[base + k];
  }
  return out;
}

/// prompt1 while i <= lambda/2, prompt2 afterwards.
inline const PromptTokens& prompt_switch(int i, int lambda, const PromptTokens& p1, const PromptTokens& p2) {
  if (lambda < 1) throw ConfigError("lambda must be at least 1");
  return 2 * i <= lambda ? p1 : p2;
}

/// p1[:a] followed by p2[b:].
inline PromptTokens stitch_prompts(const PromptTokens& p1, const PromptTokens& p2, int a, int b) {
  if (a < 0 || b < 0 || static_cast<std::size_t>(a) > p1.size() || static_cast<std::size_t>(b) > p2.size())
    throw ConfigError("stitch cut points (" + std::to_string(a) + "," + std::to_string(b) + ") out of range for " +
                      "prompts of length " + std::to_string(p1.size()) + " and " + std::to_string(p2.size()));
  PromptTokens out;
  out.ids.assign(p1.ids.begin(), p1.ids.begin() + a);
  out.ids.insert(out.ids.end(), p2.ids.begin() + b, p2.ids.end());
  return out;
}

/// Rounded mean episode length.
inline int default_lambda(const std::vector<std::size_t>& demo_lengths) {
  if (demo_lengths.empty()) throw ConfigError("default_lambda: no demonstrations");
  double s = 0;
  for (auto n : demo_lengths) s += static_cast<double>(n);
  return std::max(1, static_cast<int>(std::lround(s / static_cast<double>(demo_lengths.size()))));
}

inline int resolve_lambda(const TaskSpec& task, int suite_default) {
  return task.lambda_override ? *task.lambda_override : suite_default;
}

struct InterventionConfig {
  InterventionMode mode = InterventionMode::None;
  int lambda = 1;
  std::shared_ptr<const TextLatent> latent1;  // grasp-side (or the only) latent
  std::shared_ptr<const TextLatent> latent2;  // place-side latent
  std::optional<PromptTokens> prompt1, prompt2;
  std::vector<int> active_layers;  // empty = all hook layers
  TargetPrompt target = TargetPrompt::Task;
  std::optional<PromptTokens> explicit_prompt;
  int cut_a = -1, cut_b = -1;

  void validate(int hook_layers) const {
    if (lambda < 1) throw ConfigError("intervention lambda must be at least 1");
    (void)detail::resolve_layers(active_layers, static_cast<std::size_t>(hook_layers));
    if (mode == InterventionMode::LatentAdd && !latent1) throw ConfigError("latent_add needs a latent");
    if (needs_two_latents(mode) && (!latent1 || !latent2))
      throw ConfigError(mode_name(mode) + " needs two latents");
    if (needs_two_prompts(mode) && (!prompt1 || !prompt2))
      throw ConfigError(mode_name(mode) + " needs two prompts");
    if (target == TargetPrompt::Explicit && !explicit_prompt) throw ConfigError("explicit target without a prompt");
    if (target == TargetPrompt::Stitched && (!prompt1 || !prompt2 || cut_a < 0 || cut_b < 0))
      throw ConfigError("stitched target needs two prompts and cut points");
    for (const auto* t : {latent1.get(), latent2.get()})
      if (t && t->layers() != static_cast<std::size_t>(hook_layers))
        throw ConfigError("latent " + t->task_id + " has " + std::to_string(t->layers()) + " layers, model exposes " +
                          std::to_string(hook_layers));
  }
};

/// Per-step model inputs produced by an intervention.
template <class T>
struct SteeringStep {
  PromptTokens prompt;
  std::optional<Tensor<T>> text_override;
  HookSet<T> hooks;
  double alpha = 0;
};

/// Binds an InterventionConfig to a model and a task prompt, pre-fitting the
/// latents to the target prompt length.
template <class T>
class Steering {
 public:
  Steering(const PolicyModel<T>& model, InterventionConfig cfg, PromptTokens task_prompt)
      : model_(&model), cfg_(std::move(cfg)), task_prompt_(std::move(task_prompt)) {
    const int H = model.config().hook_layers();
    cfg_.validate(H);
    if (cfg_.mode == InterventionMode::TLI_blank) cfg_.target = TargetPrompt::Blank;
    switch (cfg_.target) {
      case TargetPrompt::Task: target_ = task_prompt_; break;
      case TargetPrompt::Blank: target_ = Vocabulary::blank_prompt(task_prompt_.size()); break;
      case TargetPrompt::Mask: target_ = PromptTokens{}; break;
      case TargetPrompt::Stitched: target_ = stitch_prompts(*cfg_.prompt1, *cfg_.prompt2, cfg_.cut_a, cfg_.cut_b); break;
      case TargetPrompt::Explicit: target_ = *cfg_.explicit_prompt; break;
    }
    layers_ = detail::resolve_layers(cfg_.active_layers, static_cast<std::size_t>(H));
    const bool uses_latents = cfg_.mode == InterventionMode::LatentAdd || needs_two_latents(cfg_.mode);
    if (uses_latents) {
      if (target_.empty()) throw InterventionError("latent interventions need a non-empty target prompt");
      const std::string fp = model_fingerprint(model);
      check_fingerprint(*cfg_.latent1, fp);
      if (cfg_.latent2) check_fingerprint(*cfg_.latent2, fp);
      const std::size_t n = target_.size();
      auto t1 = fit_token_axis(cfg_.latent1->tensor, n).template cast<T>();
      if (cfg_.mode == InterventionMode::LatentAdd) {
        add_ = per_layer(t1);
      } else {
        auto t2 = fit_token_axis(cfg_.latent2->tensor, n).template cast<T>();
        Tensor<T> diff(t1.shape());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = t1[k] - t2[k];
        diff_ = per_layer(diff);
      }
    }
    if (cfg_.mode == InterventionMode::TEI || cfg_.mode == InterventionMode::TEI_TLI) {
      e1_ = model.text_embeddings(*cfg_.prompt1);
      e2_ = model.text_embeddings(*cfg_.prompt2);
    }
  }

  const InterventionConfig& config() const { return cfg_; }
  const PromptTokens& target_prompt() const { return target_; }

  SteeringStep<T> at(int i) const {
    SteeringStep<T> s;
    s.hooks = HookSet<T>(model_->config().hook_layers());
    s.prompt = target_;
    const bool ramps = cfg_.mode != InterventionMode::None && cfg_.mode != InterventionMode::LatentAdd;
    s.alpha = ramps ? alpha(i, cfg_.lambda) : 0.0;
    switch (cfg_.mode) {
      case InterventionMode::None: break;
      case InterventionMode::LatentAdd:
        for (int l : layers_) s.hooks.add(l, add_[static_cast<std::size_t>(l - 1)]);
        break;
      case InterventionMode::PromptSwitch: s.prompt = prompt_switch(i, cfg_.lambda, *cfg_.prompt1, *cfg_.prompt2); break;
      case InterventionMode::TEI:
      case InterventionMode::TEI_TLI:
      case InterventionMode::TLI:
      case InterventionMode::TLI_blank:
        if (cfg_.mode == InterventionMode::TEI || cfg_.mode == InterventionMode::TEI_TLI)
          s.text_override = tei_blend(e1_, e2_, s.alpha, target_.size());
        if (cfg_.mode != InterventionMode::TEI) {
          const T c = static_cast<T>(tli_coefficient(s.alpha));
          for (int l : layers_) {
            Tensor<T> e = diff_[static_cast<std::size_t>(l - 1)];
            for (auto& v : e.vec()) v *= c;
            s.hooks.add(l, std::move(e));
          }
        }
        break;
    }
    return s;
  }

 private:
  static std::vector<Tensor<T>> per_layer(const Tensor<T>& x) {
    std::vector<Tensor<T>> out;
    const std::size_t n = x.dim(1) * x.dim(2);
    for (std::size_t l = 0; l < x.dim(0); ++l)
      out.emplace_back(Shape{x.dim(1), x.dim(2)}, std::vector<T>(x.data() + l * n, x.data() + (l + 1) * n));
    return out;
  }

  const PolicyModel<T>* model_;
  InterventionConfig cfg_;
  PromptTokens task_prompt_;
  PromptTokens target_;
  std::vector<int> layers_;
  std::vector<Tensor<T>> add_, diff_;
  Tensor<T> e1_, e2_;
};

/// On-disk intervention description; latents are referenced by path.
struct InterventionFile {
  InterventionMode mode = InterventionMode::None;
  std::string lambda = "auto";  // integer or "auto"
  std::string latent1, latent2;
  std::string prompt1, prompt2;
  std::vector<int> active_layers;
  TargetPrompt target = TargetPrompt::Task;
  std::string explicit_prompt;
  int cut_a = -1, cut_b = -1;
};

inline nlohmann::ordered_json to_json(const InterventionFile& f) {
  return {{"format", "latentlab-intervention"},
          {"mode", mode_name(f.mode)},
          {"lambda", f.lambda},
          {"latent1", f.latent1},
          {"latent2", f.latent2},
          {"prompt1", f.prompt1},
          {"prompt2", f.prompt2},
          {"active_layers", f.active_layers},
          {"target_prompt", target_name(f.target)},
          {"explicit_prompt", f.explicit_prompt},
          {"cut_a", f.cut_a},
          {"cut_b", f.cut_b}};
}

inline InterventionFile intervention_from_json(const nlohmann::ordered_json& j) {
  try {
    InterventionFile f;
    f.mode = parse_mode(j.at("mode").get<std::string>());
    const auto& lam = j.at("lambda");
    f.lambda = lam.is_number() ? std::to_string(lam.get<int>()) : lam.get<std::string>();
    f.latent1 = j.value("latent1", "");
    f.latent2 = j.value("latent2", "");
    f.prompt1 = j.value("prompt1", "");
    f.prompt2 = j.value("prompt2", "");
    f.active_layers = j.value("active_layers", std::vector<int>{});
    f.target = parse_target(j.value("target_prompt", "task"));
    f.explicit_prompt = j.value("explicit_prompt", "");
    f.cut_a = j.value("cut_a", -1);
    f.cut_b = j.value("cut_b", -1);
    return f;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw ConfigError(std::string("malformed intervention config: ") + e.what());
  }
}

}  // namespace latentlab
