#pragma once

#include <map>
#include <string>
#include <vector>

#include "latentlab/eval/eval.hpp"
#include "latentlab/world/oracle.hpp"

namespace latentlab {

enum class Approach { TrainedLocation, CurrentLocation, Neither };

inline std::string approach_name(Approach a) {
  switch (a) {
    case Approach::TrainedLocation: return "trained-location";
    case Approach::CurrentLocation: return "current-location";
    case Approach::Neither: return "neither";
  }
  return "?";
}

/// Where the gripper first went for the object. The first Pick attempt
/// decides (by the cell it was attempted in); without one, the first
/// post-start state within Manhattan distance 1 of either location decides
/// for the nearer location (equidistant counts as neither).
inline Approach classify_first_approach(const Episode& ep, Cell trained, Cell current) {
  auto by_cell = [&](Cell p) {
    if (p == trained) return Approach::TrainedLocation;
    if (p == current) return Approach::CurrentLocation;
    return Approach::Neither;
  };
  for (std::size_t i = 0; i < ep.steps.size(); ++i) {
    const auto& st = ep.steps[i];
    const Cell p = st.state.gripper.pos;
    if (st.action == Action::Pick) return by_cell(p);
    if (i == 0) continue;
    const int dt = manhattan(p, trained), dc = manhattan(p, current);
    if (std::min(dt, dc) <= 1) {
      if (dt == dc) return Approach::Neither;
      return dt < dc ? Approach::TrainedLocation : Approach::CurrentLocation;
    }
  }
  const Cell p = ep.final_state.gripper.pos;
  if (!ep.steps.empty()) {
    const int dt = manhattan(p, trained), dc = manhattan(p, current);
    if (std::min(dt, dc) <= 1 && dt != dc) return dt < dc ? Approach::TrainedLocation : Approach::CurrentLocation;
  }
  return Approach::Neither;
}

struct OverfitDiagnostic {
  struct Record {
    std::string task_id;
    int run;
    Approach approach;
    bool success;
  };
  std::vector<Record> records;

  double fraction(Approach a) const {
    if (records.empty()) return 0.0;
    int n = 0;
    for (const auto& r : records) n += r.approach == a ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(records.size());
  }
  int count(Approach a) const {
    int n = 0;
    for (const auto& r : records) n += r.approach == a ? 1 : 0;
    return n;
  }
};

struct ClusterResult {
  std::string cluster;
  std::string canonical_prompt;
  int runs = 0;
  int successes = 0;
  double rate() const { return runs ? static_cast<double>(successes) / runs : 0.0; }
};

struct TwoPromptReport {
  EvalReport report;
  std::vector<ClusterResult> clusters;
};

inline const LocationCluster& cluster_of(const TaskSuite& s, const TaskSpec& t) {
  for (const auto& c : s.clusters)
    if (std::find(c.task_ids.begin(), c.task_ids.end(), t.task_id) != c.task_ids.end()) return c;
  throw ConfigError("task " + t.task_id + " belongs to no location cluster");
}

/// Every task is run with its location cluster's canonical prompt (the first
/// task of the cluster); success is judged on the object at that location.
inline TwoPromptReport two_prompt_eval(const EvalContext& ctx, const TaskSuite& suite, int runs, std::uint64_t seed) {
  if (suite.clusters.empty()) throw ConfigError("suite " + suite.name + " has no location clusters");
  TwoPromptReport out;
  out.report.suite = suite.name;
  out.report.method = "two_prompt";
  std::map<std::string, std::string> canonical;
  for (const auto& c : suite.clusters) {
    if (c.task_ids.empty()) throw ConfigError("location cluster " + c.name + " is empty");
    canonical[c.name] = suite.task(c.task_ids.front()).prompt;
    out.clusters.push_back({c.name, canonical[c.name], 0, 0});
  }
  const std::size_t R = static_cast<std::size_t>(runs);
  std::vector<Episode> eps(suite.tasks.size() * R);
  std::vector<InterventionConfig> ivs;
  for (const auto& t : suite.tasks) {
    InterventionConfig c;
    c.target = TargetPrompt::Explicit;
    c.explicit_prompt = ctx.model->vocab().tokenize(canonical.at(cluster_of(suite, t).name));
    ivs.push_back(c);
  }
  RolloutOptions opt = ctx.rollout;
  opt.start_jitter = suite.start_jitter;
  parallel_for(eps.size(), ctx.workers, [&](std::size_t k) {
    eps[k] = rollout(*ctx.model, suite.tasks[k / R], &ivs[k / R], seed, k % R, opt);
  });
  for (std::size_t ti = 0; ti < suite.tasks.size(); ++ti) {
    const auto& t = suite.tasks[ti];
    TaskResult tr{t.task_id, runs, 0};
    for (std::size_t r = 0; r < R; ++r) tr.successes += eps[ti * R + r].success ? 1 : 0;
    out.report.successes += tr.successes;
    out.report.episodes += runs;
    out.report.tasks.push_back(tr);
    for (auto& c : out.clusters)
      if (c.cluster == cluster_of(suite, t).name) {
        c.runs += runs;
        c.successes += tr.successes;
      }
  }
  if (ctx.keep_traces) out.report.traces = std::move(eps);
  return out;
}

/// Copy of an object-style suite with every target moved by `offset`. The new
/// cell must be inside the grid, free, and not a trained location.
inline TaskSuite displace_targets(const TaskSuite& suite, Cell offset) {
  std::vector<Cell> trained;
  for (const auto& c : suite.clusters) trained.push_back(c.cell);
  for (const auto& t : suite.tasks) trained.push_back(t.grasp_location());
  TaskSuite out = suite;
  out.name = suite.name + "-displaced";
  for (auto& t : out.tasks) {
    auto& layout = t.initial_layout;
    auto* obj = layout.find_object(t.goal.object_id);
    const Cell to{obj->pos.x + offset.x, obj->pos.y + offset.y};
    if (to.x < 0 || to.y < 0 || to.x >= layout.grid_size || to.y >= layout.grid_size)
      throw ConfigError("displacement moves the target of " + t.task_id + " off the grid");
    if (std::find(trained.begin(), trained.end(), to) != trained.end())
      throw ConfigError("displacement puts the target of " + t.task_id + " on a trained location");
    for (const auto& o : layout.objects)
      if (o.id != obj->id && o.pos == to) throw ConfigError("displacement collides with " + o.name + " in " + t.task_id);
    for (const auto& d : layout.destinations)
      if (d.region.contains(to)) throw ConfigError("displacement puts the target of " + t.task_id + " in a destination");
    obj->pos = to;
  }
  return out;
}

struct OodPositionResult {
  EvalReport report;
  OverfitDiagnostic policy;
  OverfitDiagnostic oracle;
};

/// Relocates every target object to an untrained cell, evaluates with the
/// task prompts, and classifies where each episode first went.
inline OodPositionResult ood_position_eval(const EvalContext& ctx, const TaskSuite& suite, Cell offset, int runs,
                                           std::uint64_t seed) {
  const TaskSuite moved = displace_targets(suite, offset);
  OodPositionResult out;
  EvalContext c = ctx;
  c.keep_traces = true;
  out.report = run_job(c, {&moved, Method::Original, 0, runs, seed});
  const std::size_t R = static_cast<std::size_t>(runs);
  for (std::size_t ti = 0; ti < moved.tasks.size(); ++ti) {
    const auto& t = moved.tasks[ti];
    const Cell trained = suite.tasks[ti].grasp_location();
    const Cell current = t.grasp_location();
    for (std::size_t r = 0; r < R; ++r) {
      const Episode& ep = out.report.traces[ti * R + r];
      out.policy.records.push_back({t.task_id, static_cast<int>(r), classify_first_approach(ep, trained, current), ep.success});
      Episode oracle = oracle_episode(t, start_state(t, moved.start_jitter, seed, r), ctx.rollout.max_steps);
      out.oracle.records.push_back(
          {t.task_id, static_cast<int>(r), classify_first_approach(oracle, trained, current), oracle.success});
    }
  }
  if (!ctx.keep_traces) out.report.traces.clear();
  return out;
}

}  // namespace latentlab
