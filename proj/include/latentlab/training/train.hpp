#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/rng.hpp"
#include "latentlab/model/checkpoint.hpp"
#include "latentlab/model/policy.hpp"
#include "latentlab/numerics/adam.hpp"
#include "latentlab/training/demos.hpp"

namespace latentlab {

struct TrainConfig {
  std::uint64_t seed = 1;
  int batch_size = 64;
  int steps = 2000;
  double lr = 1e-3;
  int warmup_steps = 100;
  double final_phase = 0.15;      // trailing fraction of steps run at lr * final_lr_scale
  double final_lr_scale = 0.1;
  int demos_per_task = 20;
  int log_every = 50;
  int eval_every = 0;             // 0 = only at the end
  int checkpoint_every = 0;       // 0 = no periodic checkpoints

  void validate() const {
    if (batch_size < 1 || steps < 1 || demos_per_task < 1 || log_every < 1 || warmup_steps < 0 || eval_every < 0 ||
        checkpoint_every < 0)
      throw ConfigError("training config values must be positive");
    if (!(lr > 0) || !(final_lr_scale > 0) || final_phase < 0 || final_phase >= 1)
      throw ConfigError("training learning-rate schedule is invalid");
  }

  /// Linear warmup, constant, then a reduced final phase.
  double lr_at(int step) const {
    if (step < warmup_steps) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (step >= final_phase_start()) return lr * final_lr_scale;
    return lr;
  }
  int final_phase_start() const { return steps - static_cast<int>(std::lround(final_phase * steps)); }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"final_phase", c.final_phase},
          {"final_lr_scale", c.final_lr_scale},
          {"demos_per_task", c.demos_per_task},
          {"log_every", c.log_every},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.lr = j.value("lr", c.lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.final_phase = j.value("final_phase", c.final_phase);
  c.final_lr_scale = j.value("final_lr_scale", c.final_lr_scale);
  c.demos_per_task = j.value("demos_per_task", c.demos_per_task);
  c.log_every = j.value("log_every", c.log_every);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

struct TrainLogRow {
  int step;
  double lr;
  double loss;
  std::optional<double> eval_success;
};

struct TrainOutputs {
  std::filesystem::path log_csv;         // empty = no log file
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  std::function<double(const PolicyModel<float>&)> evaluate;  // greedy success rate
  std::function<void(const TrainLogRow&)> on_log;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> step_losses;
  std::optional<double> final_success;
};

/// Keeps large, short-lived activation buffers on the heap instead of
/// mapping fresh pages for every batch.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

/// Pre-encoded training samples.
struct TrainingSet {
  std::vector<PolicyInput<float>> inputs;
  std::vector<Action> targets;
};

inline TrainingSet encode_dataset(const DemoDataset& ds, const ModelConfig& cfg, const Vocabulary& vocab) {
  TrainingSet ts;
  std::map<std::string, PromptTokens> tok;
  for (const auto& [id, p] : ds.prompts) tok[id] = vocab.tokenize(p);
  for (const auto& ep : ds.episodes)
    for (const auto& st : ep.steps) {
      ts.inputs.push_back({observe(st.state, cfg), tok.at(ep.task_id), {}});
      ts.targets.push_back(st.action);
    }
  return ts;
}

/// Behaviour cloning: minimises mean cross-entropy of expert actions with
/// Adam. A non-finite loss or gradient stops training; the weights at that
/// point (the last good ones) are written to checkpoint_dir/last_good.ckpt.
inline TrainResult train(PolicyModel<float>& model, const DemoDataset& ds, const TrainConfig& cfg,
                         const TrainOutputs& out = {}) {
  cfg.validate();
  tune_allocator();
  const TrainingSet ts = encode_dataset(ds, model.config(), model.vocab());
  if (ts.inputs.empty()) throw ConfigError("train: dataset is empty");
  auto ckpt_meta = [&](int step) {
    auto j = out.provenance;
    j["train_config"] = to_json(cfg);
    j["step"] = step;
    return j;
  };
  std::ofstream log;
  if (!out.log_csv.empty()) {
    if (out.log_csv.has_parent_path()) std::filesystem::create_directories(out.log_csv.parent_path());
    log.open(out.log_csv, std::ios::trunc);
    if (!log) throw IoError("cannot write " + out.log_csv.string());
    log << "step,lr,loss,eval_success\n";
  }
  auto emit = [&](const TrainLogRow& r, TrainResult& res) {
    res.log.push_back(r);
    if (log) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%d,%.6g,%.6f,", r.step, r.lr, r.loss);
      log << buf;
      if (r.eval_success) {
        std::snprintf(buf, sizeof buf, "%.4f", *r.eval_success);
        log << buf;
      }
      log << "\n";
      log.flush();
    }
    if (out.on_log) out.on_log(r);
  };

  OptimizerState<float> opt = OptimizerState<float>::for_parameters(model.parameters(), AdamConfig{});
  Rng order_rng = Rng(cfg.seed).split("batch-order");
  std::vector<std::size_t> order(ts.inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  TrainResult res;
  double window = 0;
  int window_n = 0;
  std::vector<const PolicyInput<float>*> batch;
  std::vector<Action> targets;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    targets.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      batch.push_back(&ts.inputs[i]);
      targets.push_back(ts.targets[i]);
    }
    model.parameters().zero_grad();
    Graph<float> g(true);
    auto loss = model.loss(g, batch, targets);
    const double lv = g.value(loss)[0];
    const double lr = cfg.lr_at(step);
    try {
      if (!std::isfinite(lv)) throw NumericError("non-finite training loss at step " + std::to_string(step));
      g.backward(loss);
      adam_step(opt, model.parameters(), lr);
    } catch (const NumericError& e) {
      if (!out.checkpoint_dir.empty()) save_checkpoint(model, out.checkpoint_dir / "last_good.ckpt", ckpt_meta(step));
      throw NumericError(std::string(e.what()) + "; training aborted at step " + std::to_string(step) +
                         (out.checkpoint_dir.empty() ? "" : ", last good weights saved"));
    }
    res.step_losses.push_back(lv);
    window += lv;
    ++window_n;
    const bool last = step + 1 == cfg.steps;
    const bool eval_now = out.evaluate && ((cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) || last);
    if ((step + 1) % cfg.log_every == 0 || last || eval_now) {
      TrainLogRow row{step + 1, lr, window / window_n, std::nullopt};
      if (eval_now) row.eval_success = out.evaluate(model);
      if (last) res.final_success = row.eval_success;
      emit(row, res);
      window = 0;
      window_n = 0;
    }
    if (!out.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(model, out.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".ckpt"), ckpt_meta(step + 1));
  }
  return res;
}

}  // namespace latentlab
