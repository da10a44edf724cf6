#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/core/rng.hpp"
#include "latentlab/world/oracle.hpp"
#include "latentlab/world/words.hpp"
#include "latentlab/world/world.hpp"

namespace latentlab {

enum class SuiteTag { Goal, Object, Spatial, Ood };

inline std::string tag_name(SuiteTag t) {
  switch (t) {
    case SuiteTag::Goal: return "goal";
    case SuiteTag::Object: return "object";
    case SuiteTag::Spatial: return "spatial";
    case SuiteTag::Ood: return "ood";
  }
  return "?";
}

inline SuiteTag parse_tag(const std::string& s) {
  if (s == "goal" || s == "goal-style") return SuiteTag::Goal;
  if (s == "object" || s == "object-style") return SuiteTag::Object;
  if (s == "spatial" || s == "spatial-style") return SuiteTag::Spatial;
  if (s == "ood") return SuiteTag::Ood;
  throw UsageError("unknown suite archetype '" + s + "' (expected goal, object, spatial)");
}

struct TaskSpec {
  std::string task_id;
  std::string prompt;
  WorldState initial_layout;
  Goal goal;
  SuiteTag tag = SuiteTag::Goal;
  std::string family;         // base archetype the scene comes from
  int object_phrase_len = 0;  // words up to and including the object noun phrase
  std::vector<std::string> parents;  // OOD only: {grasp parent, place parent}
  bool object_swap = false;
  std::optional<int> lambda_override;

  Cell grasp_location() const { return initial_layout.object(goal.object_id).pos; }
  Cell place_location() const { return initial_layout.destination(goal.destination_id).region.origin; }
  const std::string& target_name() const { return initial_layout.object(goal.object_id).name; }
};

/// A set of object-style tasks whose targets share one trained cell.
struct LocationCluster {
  std::string name;
  Cell cell;
  std::vector<std::string> task_ids;
};

struct TaskSuite {
  std::string name;
  SuiteTag tag = SuiteTag::Goal;
  std::uint64_t seed = 0;
  int start_jitter = 1;  // gripper start is jittered by up to this many cells per axis
  std::vector<TaskSpec> tasks;
  std::vector<LocationCluster> clusters;

  const TaskSpec& task(const std::string& id) const {
    for (const auto& t : tasks)
      if (t.task_id == id) return t;
    throw ConfigError("suite '" + name + "' has no task '" + id + "'");
  }
  const TaskSpec* find(const std::string& id) const {
    for (const auto& t : tasks)
      if (t.task_id == id) return &t;
    return nullptr;
  }
};

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

inline std::string join_words(const std::vector<std::string>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + w[i];
  return s;
}

/// The per-run initial state: the task layout with the gripper start
/// jittered inside the suite's start window.
inline WorldState initial_state(const TaskSpec& task, int start_jitter, Rng rng) {
  WorldState s = task.initial_layout;
  if (start_jitter > 0 && !s.gripper.held) {
    const int dx = rng.range(-start_jitter, start_jitter);
    const int dy = rng.range(-start_jitter, start_jitter);
    s.gripper.pos.x = std::clamp(s.gripper.pos.x + dx, 0, s.grid_size - 1);
    s.gripper.pos.y = std::clamp(s.gripper.pos.y + dy, 0, s.grid_size - 1);
  }
  s.step_count = 0;
  return s;
}

/// Runs the oracle until the goal holds or `max_steps` elapse.
inline Episode oracle_episode(const TaskSpec& task, const WorldState& start, int max_steps) {
  Episode ep;
  ep.task_id = task.task_id;
  ep.mode = "oracle";
  WorldState s = start;
  for (int i = 0; i < max_steps && !goal_satisfied(s, task.goal); ++i) {
    Action a = oracle_policy(s, task.goal);
    ep.steps.push_back({s, a, 0.0});
    s = step(s, a);
  }
  ep.final_state = s;
  ep.success = goal_satisfied(s, task.goal);
  return ep;
}

namespace detail {

inline std::string task_label(const std::string& prefix, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%02zu", prefix.c_str(), k);
  return buf;
}

inline TaskSuite goal_suite(std::uint64_t seed, int n_tasks) {
  Rng rng = Rng(seed).split("goal-suite");
  auto objects = words::kGoalObjects;
  auto dests = words::kGoalDestinations;
  const int max_pairs = static_cast<int>(objects.size() * dests.size());
  if (n_tasks > max_pairs)
    throw ConfigError("goal-style suite supports at most " + std::to_string(max_pairs) + " tasks");
  rng.shuffle(objects);
  rng.shuffle(dests);

  // Objects on the row y=2, destinations on y=7; the gripper rests between.
  WorldState layout;
  layout.grid_size = 9;
  layout.gripper.pos = {4, 4};
  for (std::size_t i = 0; i < objects.size(); ++i)
    layout.objects.push_back({static_cast<int>(i), objects[i], {static_cast<int>(i) + 1, 2}});
  const int dest_x[] = {1, 3, 5, 7};
  for (std::size_t i = 0; i < dests.size(); ++i)
    layout.destinations.push_back({static_cast<int>(i), dests[i], {{dest_x[i], 7}, 1, 1}});

  TaskSuite suite;
  suite.name = "goal";
  suite.tag = SuiteTag::Goal;
  suite.seed = seed;
  // Every used object goes to at least two destinations (n >= 2), so the
  // held object alone never identifies the goal.
  const int n_dst = static_cast<int>(dests.size());
  const int n_used = std::min(static_cast<int>(objects.size()), std::max(1, (n_tasks + 2) / 3));
  for (int k = 0; k < n_tasks; ++k) {
    const int o = k % n_used;
    const int round = k / n_used;
    const int d = (o + round) % n_dst;
    TaskSpec t;
    t.task_id = task_label("goal", static_cast<std::size_t>(k));
    t.prompt = "put the " + objects[o] + " on the " + dests[d];
    t.initial_layout = layout;
    t.goal = {o, d};
    t.tag = SuiteTag::Goal;
    t.family = "goal";
    t.object_phrase_len = 3;
    suite.tasks.push_back(std::move(t));
  }
  return suite;
}

inline TaskSuite object_suite(std::uint64_t seed, int n_tasks) {
  const int pool = static_cast<int>(words::kObjectSuiteObjects.size());
  if (n_tasks > pool) throw ConfigError("object-style suite supports at most " + std::to_string(pool) + " tasks");
  if (n_tasks < 2) throw ConfigError("object-style suite needs at least 2 tasks (two location clusters)");
  Rng rng = Rng(seed).split("object-suite");
  auto names = words::kObjectSuiteObjects;
  // cream_cheese and alphabet_soup lead their clusters; the rest are shuffled.
  std::vector<std::string> rest(names.begin() + 2, names.end());
  rng.shuffle(rest);
  const int n_center = (n_tasks + 1) / 2;
  std::vector<std::string> center{names[0]}, corner{names[1]};
  for (const auto& r : rest) {
    if (static_cast<int>(center.size()) < n_center) center.push_back(r);
    else corner.push_back(r);
  }
  const Cell center_cell{4, 2};
  const Cell corner_cell{7, 7};
  const Cell filler_cells[] = {{1, 1}, {7, 1}, {2, 5}};

  TaskSuite suite;
  suite.name = "object";
  suite.tag = SuiteTag::Object;
  suite.seed = seed;
  suite.clusters = {{"center", center_cell, {}}, {"top_right", corner_cell, {}}};
  for (int k = 0; k < n_tasks; ++k) {
    const bool in_center = k < n_center;
    const std::string& target = in_center ? center[static_cast<std::size_t>(k)]
                                          : corner[static_cast<std::size_t>(k - n_center)];
    const auto& other_pool = in_center ? corner : center;
    const std::string& other = other_pool[rng.below(other_pool.size())];
    WorldState s;
    s.grid_size = 9;
    s.gripper.pos = {4, 5};
    s.objects.push_back({0, target, in_center ? center_cell : corner_cell});
    s.objects.push_back({1, other, in_center ? corner_cell : center_cell});
    // two of the three fillers, each at its fixed home cell
    const std::size_t skip = rng.below(3);
    int id = 2;
    for (std::size_t f = 0; f < 3; ++f)
      if (f != skip) s.objects.push_back({id++, words::kObjectSuiteFillers[f], filler_cells[f]});
    s.destinations.push_back({0, words::kBasket, {{0, 7}, 2, 2}});
    TaskSpec t;
    t.task_id = task_label("object", static_cast<std::size_t>(k));
    t.prompt = "pick up the " + target + " and place it in the basket";
    t.initial_layout = std::move(s);
    t.goal = {0, 0};
    t.tag = SuiteTag::Object;
    t.family = "object";
    t.object_phrase_len = 4;
    suite.clusters[in_center ? 0 : 1].task_ids.push_back(t.task_id);
    suite.tasks.push_back(std::move(t));
  }
  return suite;
}

inline TaskSuite spatial_suite(std::uint64_t seed, int n_tasks) {
  if (n_tasks > 40) throw ConfigError("spatial-style suite supports at most 40 tasks");
  Rng rng = Rng(seed).split("spatial-suite");
  const auto& dnames = words::kSpatialDestinations;
  const int dest_x[] = {1, 4, 7};

  TaskSuite suite;
  suite.name = "spatial";
  suite.tag = SuiteTag::Spatial;
  suite.seed = seed;
  std::set<std::pair<Cell, Cell>> used_pairs;
  const std::size_t dest_offset = rng.below(dnames.size());
  // descriptor kinds: 0,1 = next to landmark 0/1; 2..5 = left/right/top/bottom
  std::vector<int> kinds = {0, 1, 2, 3, 4, 5};
  auto describe = [&](const std::vector<Cell>& cells, int kind, int target, std::string& phrase) {
    const Cell tc = cells[static_cast<std::size_t>(target)];
    const Cell oc = cells[static_cast<std::size_t>(1 - target)];
    if (kind < 2) {
      const Cell lm = cells[2 + static_cast<std::size_t>(kind)];
      phrase = "pick up the bowl next to the " + words::kSpatialLandmarks[static_cast<std::size_t>(kind)];
      return manhattan(tc, lm) == 1 && manhattan(oc, lm) > 1;
    }
    const auto& rel = words::kRelations[static_cast<std::size_t>(kind - 2)];
    phrase = "pick up the " + rel + " bowl";
    if (rel == "left") return tc.x < oc.x;
    if (rel == "right") return tc.x > oc.x;
    if (rel == "top") return tc.y > oc.y;
    return tc.y < oc.y;
  };
  // Consecutive tasks share a layout and grasp the same bowl under different
  // descriptors, then place it on different destinations.
  for (int k = 0; k < n_tasks; k += 2) {
    if (k % 6 == 0) rng.shuffle(kinds);
    const int n_here = std::min(2, n_tasks - k);
    auto& kb = kinds[static_cast<std::size_t>((k + 1) % 6)];
    const int ka = kinds[static_cast<std::size_t>(k % 6)];
    if (ka >= 2 && kb >= 2 && (ka - 2) / 2 == (kb - 2) / 2) std::swap(kb, kinds[static_cast<std::size_t>((k + 2) % 6)]);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw GenerationError("could not sample a spatial layout");
      std::vector<Cell> cells;
      while (cells.size() < 4) {
        Cell c{rng.range(0, 8), rng.range(1, 3)};
        if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
      }
      const int target = static_cast<int>(rng.below(2));
      std::vector<std::string> phrases(static_cast<std::size_t>(n_here));
      std::vector<std::pair<Cell, Cell>> pairs;
      bool ok = true;
      for (int j = 0; j < n_here && ok; ++j) {
        const int kind = kinds[static_cast<std::size_t>((k + j) % 6)];
        const std::size_t di = (static_cast<std::size_t>(k + j) + dest_offset) % dnames.size();
        ok = describe(cells, kind, target, phrases[static_cast<std::size_t>(j)]);
        pairs.push_back({cells[static_cast<std::size_t>(target)], Cell{dest_x[di], 7}});
        if (used_pairs.count(pairs.back())) ok = false;
      }
      if (!ok) continue;

      WorldState s;
      s.grid_size = 9;
      s.gripper.pos = {4, 5};
      s.objects.push_back({0, words::kSpatialObject, cells[0]});
      s.objects.push_back({1, words::kSpatialObject, cells[1]});
      s.objects.push_back({2, words::kSpatialLandmarks[0], cells[2]});
      s.objects.push_back({3, words::kSpatialLandmarks[1], cells[3]});
      for (std::size_t d = 0; d < dnames.size(); ++d)
        s.destinations.push_back({static_cast<int>(d), dnames[d], {{dest_x[d], 7}, 1, 1}});
      for (int j = 0; j < n_here; ++j) {
        used_pairs.insert(pairs[static_cast<std::size_t>(j)]);
        const std::size_t di = (static_cast<std::size_t>(k + j) + dest_offset) % dnames.size();
        const auto& phrase = phrases[static_cast<std::size_t>(j)];
        TaskSpec t;
        t.task_id = task_label("spatial", static_cast<std::size_t>(k + j));
        t.object_phrase_len = static_cast<int>(split_words(phrase).size());
        t.prompt = phrase + " and place it on the " + dnames[di];
        t.initial_layout = s;
        t.goal = {target, static_cast<int>(di)};
        t.tag = SuiteTag::Spatial;
        t.family = "spatial";
        suite.tasks.push_back(std::move(t));
      }
      break;
    }
  }
  return suite;
}

}  // namespace detail

/// Builds a base suite of one archetype (goal, object or spatial).
inline TaskSuite generate_suite(SuiteTag archetype, std::uint64_t seed, int n_tasks) {
  if (n_tasks < 1) throw ConfigError("n_tasks must be positive");
  switch (archetype) {
    case SuiteTag::Goal: return detail::goal_suite(seed, n_tasks);
    case SuiteTag::Object: return detail::object_suite(seed, n_tasks);
    case SuiteTag::Spatial: return detail::spatial_suite(seed, n_tasks);
    case SuiteTag::Ood: break;
  }
  throw ConfigError("generate_suite: archetype must be goal, object or spatial");
}

/// Knobs for extrapolated-suite generation.
struct OodOptions {
  double swap_fraction = 0.2;  // share of tasks that swap a new object into a trained grasp cell
};

/// Emits tasks whose (grasp cell, place cell) pair belongs to no base task of
/// the same scene family, while the grasp cell comes from one base task and
/// the place cell from a different one. Families are sampled round-robin.
inline TaskSuite generate_ood_suite(const std::vector<TaskSuite>& bases, std::uint64_t seed, int n_tasks,
                                    OodOptions options = {}) {
  if (n_tasks < 1) throw ConfigError("n_tasks must be positive");
  Rng rng = Rng(seed).split("ood-suite");

  struct Candidate {
    const TaskSpec* grasp;
    const TaskSpec* place;
    bool swap;
  };
  std::vector<std::vector<Candidate>> plain_by_family, swap_by_family;
  std::vector<std::string> family_names;

  for (const auto& base : bases) {
    if (base.tag == SuiteTag::Ood) throw ConfigError("OOD suites cannot be used as bases");
    std::set<std::pair<Cell, Cell>> demonstrated;
    for (const auto& t : base.tasks) demonstrated.insert({t.grasp_location(), t.place_location()});
    std::vector<Candidate> plain, swaps;
    std::set<std::string> seen;
    for (const auto& a : base.tasks) {
      for (const auto& b : base.tasks) {
        if (&a == &b) continue;
        const auto& dname = b.initial_layout.destination(b.goal.destination_id).name;
        const Destination* in_a = nullptr;
        for (const auto& d : a.initial_layout.destinations)
          if (d.name == dname) in_a = &d;
        if (!in_a) continue;
        const Cell g = a.grasp_location();
        const Cell p = in_a->region.origin;
        if (p != b.place_location()) continue;  // place cell must be the trained one
        if (demonstrated.count({g, p})) continue;
        // one candidate per (scene, grasp cell, destination)
        std::ostringstream key;
        key << (base.tag == SuiteTag::Goal ? std::string("goal") : a.task_id) << ':' << g.x << ',' << g.y << "->"
            << dname;
        if (!seen.insert(key.str()).second) continue;
        plain.push_back({&a, &b, false});
        if (base.tag == SuiteTag::Goal) swaps.push_back({&a, &b, true});
      }
    }
    if (plain.empty()) continue;
    rng.shuffle(plain);
    rng.shuffle(swaps);
    family_names.push_back(base.name);
    plain_by_family.push_back(std::move(plain));
    swap_by_family.push_back(std::move(swaps));
  }
  if (plain_by_family.empty()) throw GenerationError("no base task pair yields a novel (grasp, place) combination");

  std::size_t total_swaps = 0;
  for (const auto& s : swap_by_family) total_swaps += s.size();
  int n_swap = static_cast<int>(std::lround(options.swap_fraction * n_tasks));
  if (total_swaps == 0) n_swap = 0;

  // Round-robin over families; swap variants draw from goal-style scenes.
  std::vector<Candidate> chosen;
  std::set<std::string> used_plain;
  std::vector<std::size_t> next_plain(plain_by_family.size(), 0), next_swap(plain_by_family.size(), 0);
  int swaps_taken = 0;
  for (std::size_t round = 0; static_cast<int>(chosen.size()) < n_tasks; ++round) {
    bool progressed = false;
    for (std::size_t f = 0; f < plain_by_family.size() && static_cast<int>(chosen.size()) < n_tasks; ++f) {
      if (swaps_taken < n_swap && next_swap[f] < swap_by_family[f].size()) {
        chosen.push_back(swap_by_family[f][next_swap[f]++]);
        ++swaps_taken;
        progressed = true;
        continue;
      }
      if (next_plain[f] < plain_by_family[f].size()) {
        chosen.push_back(plain_by_family[f][next_plain[f]++]);
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  if (static_cast<int>(chosen.size()) < n_tasks)
    throw GenerationError("only " + std::to_string(chosen.size()) + " novel extrapolated tasks available, " +
                          std::to_string(n_tasks) + " requested");

  TaskSuite out;
  out.name = "ood";
  out.tag = SuiteTag::Ood;
  out.seed = seed;
  out.start_jitter = bases.front().start_jitter;
  std::vector<std::string> swap_pool = words::kObjectSuiteObjects;
  rng.shuffle(swap_pool);
  std::size_t swap_i = 0;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& c = chosen[k];
    const TaskSpec& a = *c.grasp;
    const TaskSpec& b = *c.place;
    TaskSpec t;
    t.task_id = detail::task_label("ood-" + a.family, k);
    t.tag = SuiteTag::Ood;
    t.family = a.family;
    t.parents = {a.task_id, b.task_id};
    t.object_phrase_len = a.object_phrase_len;
    t.initial_layout = a.initial_layout;
    const auto& dname = b.initial_layout.destination(b.goal.destination_id).name;
    int dest_id = -1;
    for (const auto& d : t.initial_layout.destinations)
      if (d.name == dname) dest_id = d.id;
    auto a_words = split_words(a.prompt);
    auto b_words = split_words(b.prompt);
    std::vector<std::string> w(a_words.begin(), a_words.begin() + a.object_phrase_len);
    w.insert(w.end(), b_words.begin() + b.object_phrase_len, b_words.end());
    int target = a.goal.object_id;
    if (c.swap) {
      // a new object takes the trained grasp cell; the displaced object moves
      // to the first free cell on the row below
      auto& layout = t.initial_layout;
      const std::string old_name = layout.object(target).name;
      const std::string new_name = swap_pool[swap_i++ % swap_pool.size()];
      int next_id = 0;
      for (const auto& o : layout.objects) next_id = std::max(next_id, o.id + 1);
      const Cell grasp = layout.object(target).pos;
      Cell free{-1, -1};
      for (int y = grasp.y - 1; y >= 0 && free.x < 0; --y)
        for (int x = 0; x < layout.grid_size && free.x < 0; ++x) {
          bool occupied = false;
          for (const auto& o : layout.objects) occupied |= o.pos == Cell{x, y};
          if (!occupied) free = {x, y};
        }
      if (free.x < 0) throw GenerationError("no free cell for displaced object");
      layout.find_object(target)->pos = free;
      layout.objects.push_back({next_id, new_name, grasp});
      target = next_id;
      for (auto& word : w)
        if (word == old_name) word = new_name;
      t.object_swap = true;
    }
    t.prompt = join_words(w);
    t.goal = {target, dest_id};
    out.tasks.push_back(std::move(t));
  }
  return out;
}

/// Every (grasp, place) cell pair demonstrated by a base suite.
inline std::set<std::pair<Cell, Cell>> demonstrated_pairs(const TaskSuite& base) {
  std::set<std::pair<Cell, Cell>> s;
  for (const auto& t : base.tasks) s.insert({t.grasp_location(), t.place_location()});
  return s;
}

}  // namespace latentlab
