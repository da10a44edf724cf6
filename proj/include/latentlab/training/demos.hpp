#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentlab/core/error.hpp"
#include "latentlab/core/hash.hpp"
#include "latentlab/core/io.hpp"
#include "latentlab/core/rng.hpp"
#include "latentlab/world/manifest.hpp"
#include "latentlab/world/suite.hpp"

namespace latentlab {

inline constexpr int kDefaultMaxSteps = 60;

/// Successful oracle episodes, grouped by task in suite order.
struct DemoDataset {
  struct Sample {
    std::size_t episode;
    std::size_t step;
  };

  std::vector<Episode> episodes;
  std::map<std::string, std::string> prompts;  // task_id -> prompt
  std::map<std::string, int> demos_per_task;
  std::uint64_t seed = 0;

  std::vector<Sample> samples() const {
    std::vector<Sample> out;
    for (std::size_t e = 0; e < episodes.size(); ++e)
      for (std::size_t s = 0; s < episodes[e].steps.size(); ++s) out.push_back({e, s});
    return out;
  }

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.steps.size();
    return n;
  }

  std::vector<Episode> episodes_of(const std::string& task_id) const {
    std::vector<Episode> out;
    for (const auto& e : episodes)
      if (e.task_id == task_id) out.push_back(e);
    return out;
  }

  std::vector<std::size_t> episode_lengths() const {
    std::vector<std::size_t> out;
    for (const auto& e : episodes) out.push_back(e.steps.size());
    return out;
  }

  const std::string& prompt_of(const std::string& task_id) const {
    auto it = prompts.find(task_id);
    if (it == prompts.end()) throw ConfigError("dataset has no task " + task_id);
    return it->second;
  }

  void append(const DemoDataset& other) {
    for (const auto& [id, p] : other.prompts)
      if (prompts.count(id)) throw ConfigError("task " + id + " appears in two datasets");
    episodes.insert(episodes.end(), other.episodes.begin(), other.episodes.end());
    prompts.insert(other.prompts.begin(), other.prompts.end());
    demos_per_task.insert(other.demos_per_task.begin(), other.demos_per_task.end());
  }
};

/// Start state of demo / run `k` of a task; the same rule serves evaluation
/// runs so a seed fully determines the episode.
inline WorldState start_state(const TaskSpec& task, int start_jitter, std::uint64_t seed, std::uint64_t k) {
  return initial_state(task, start_jitter, Rng(seed).split(task.task_id).split(k));
}

/// K oracle episodes per task. Only the gripper start varies between demos;
/// object layouts stay those of the suite.
inline DemoDataset collect_demos(const TaskSuite& suite, int K, std::uint64_t seed, int max_steps = kDefaultMaxSteps) {
  if (K < 1) throw ConfigError("collect_demos: K must be at least 1");
  DemoDataset ds;
  ds.seed = seed;
  for (const auto& t : suite.tasks) {
    ds.prompts[t.task_id] = t.prompt;
    ds.demos_per_task[t.task_id] = K;
    for (int k = 0; k < K; ++k) {
      Episode ep = oracle_episode(t, start_state(t, suite.start_jitter, seed, static_cast<std::uint64_t>(k)), max_steps);
      if (!ep.success) throw Error("internal: oracle failed on task " + t.task_id);
      ds.episodes.push_back(std::move(ep));
    }
  }
  return ds;
}

inline Json to_json(const DemoDataset& ds, const Json& extra = Json::object()) {
  Json j;
  j["format"] = "latentlab-demos";
  j["version"] = 1;
  j["seed"] = ds.seed;
  j["tasks"] = Json::array();
  for (const auto& [id, p] : ds.prompts) j["tasks"].push_back({{"task_id", id}, {"prompt", p}, {"K", ds.demos_per_task.at(id)}});
  j["episodes"] = Json::array();
  for (const auto& e : ds.episodes) {
    Json a = Json::array();
    for (const auto& s : e.steps) a.push_back(std::string(action_name(s.action)));
    j["episodes"].push_back({{"task_id", e.task_id}, {"start", to_json(e.steps.empty() ? e.final_state : e.steps[0].state)},
                             {"actions", a}, {"success", e.success}});
  }
  if (!extra.empty()) j["provenance"] = extra;
  return j;
}

/// Rebuilds episodes by replaying the recorded actions; the goal comes from
/// the suite(s) the dataset was collected on.
inline DemoDataset dataset_from_json(const Json& j, const std::vector<const TaskSuite*>& suites) {
  try {
    if (j.value("format", "") != "latentlab-demos") throw LoadError("not a demo dataset");
    DemoDataset ds;
    ds.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tasks")) {
      ds.prompts[t.at("task_id").get<std::string>()] = t.at("prompt").get<std::string>();
      ds.demos_per_task[t.at("task_id").get<std::string>()] = t.at("K").get<int>();
    }
    for (const auto& e : j.at("episodes")) {
      const auto id = e.at("task_id").get<std::string>();
      const TaskSpec* task = nullptr;
      for (const auto* s : suites)
        if ((task = s->find(id))) break;
      if (!task) throw LoadError("dataset episode references unknown task " + id);
      Episode ep;
      ep.task_id = id;
      ep.mode = "oracle";
      WorldState s = world_from_json(e.at("start"));
      for (const auto& a : e.at("actions")) {
        const Action act = parse_action(a.get<std::string>());
        ep.steps.push_back({s, act, 0.0});
        s = step(s, act);
      }
      ep.final_state = s;
      ep.success = goal_satisfied(s, task->goal);
      if (!ep.success) throw LoadError("dataset episode for " + id + " does not reach its goal on replay");
      ds.episodes.push_back(std::move(ep));
    }
    return ds;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed demo dataset: ") + e.what());
  }
}

inline void save_dataset(const DemoDataset& ds, const std::filesystem::path& path, const Json& extra = Json::object()) {
  write_text_file(path, to_json(ds, extra).dump() + "\n");
}

inline DemoDataset load_dataset(const std::filesystem::path& path, const std::vector<const TaskSuite*>& suites) {
  try {
    return dataset_from_json(Json::parse(read_text_file(path)), suites);
  } catch (const Json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline std::string dataset_fingerprint(const DemoDataset& ds) { return Fnv1a().str(to_json(ds).dump()).hex(); }

}  // namespace latentlab
