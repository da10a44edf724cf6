#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentlab/core/error.hpp"

namespace latentlab {

/// Grid coordinate; x grows to the right, y grows towards the top.
struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

enum class Action : std::uint8_t { Up, Down, Left, Right, Pick, Place };

inline constexpr std::size_t kActionCount = 6;

inline constexpr std::array<std::string_view, kActionCount> kActionNames = {"Up", "Down", "Left", "Right", "Pick",
                                                                            "Place"};

inline std::string_view action_name(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

inline Action parse_action(std::string_view s) {
  for (std::size_t i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == s) return static_cast<Action>(i);
  throw ConfigError("unknown action '" + std::string(s) + "'");
}

/// Axis-aligned block of cells.
struct Region {
  Cell origin;
  int width = 1;
  int height = 1;
  bool contains(Cell c) const {
    return c.x >= origin.x && c.x < origin.x + width && c.y >= origin.y && c.y < origin.y + height;
  }
  friend bool operator==(const Region&, const Region&) = default;
};

struct ObjectInstance {
  int id = 0;
  std::string name;
  Cell pos;
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct Destination {
  int id = 0;
  std::string name;
  Region region;
  friend bool operator==(const Destination&, const Destination&) = default;
};

struct Gripper {
  Cell pos;
  std::optional<int> held;
  friend bool operator==(const Gripper&, const Gripper&) = default;
};

struct Goal {
  int object_id = 0;
  int destination_id = 0;
  friend bool operator==(const Goal&, const Goal&) = default;
};

/// Complete world snapshot. A held object's position follows the gripper.
struct WorldState {
  int grid_size = 9;
  std::vector<ObjectInstance> objects;
  std::vector<Destination> destinations;
  Gripper gripper;
  int step_count = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  bool in_grid(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < grid_size && c.y < grid_size; }

  const ObjectInstance* find_object(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  ObjectInstance* find_object(int id) {
    for (auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const Destination* find_destination(int id) const {
    for (const auto& d : destinations)
      if (d.id == id) return &d;
    return nullptr;
  }
  const ObjectInstance& object(int id) const {
    if (auto* o = find_object(id)) return *o;
    throw ConfigError("unknown object id " + std::to_string(id));
  }
  const Destination& destination(int id) const {
    if (auto* d = find_destination(id)) return *d;
    throw ConfigError("unknown destination id " + std::to_string(id));
  }
};

/// Structural checks: positions in grid, unique ids, held object exists and
/// sits under the gripper.
inline void validate(const WorldState& s) {
  if (s.grid_size < 2) throw ConfigError("grid_size must be at least 2");
  if (!s.in_grid(s.gripper.pos)) throw ConfigError("gripper outside grid");
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    if (!s.in_grid(s.objects[i].pos)) throw ConfigError("object '" + s.objects[i].name + "' outside grid");
    for (std::size_t j = 0; j < i; ++j)
      if (s.objects[i].id == s.objects[j].id) throw ConfigError("duplicate object id");
  }
  for (std::size_t i = 0; i < s.destinations.size(); ++i) {
    const auto& r = s.destinations[i].region;
    if (r.width < 1 || r.height < 1 || !s.in_grid(r.origin) ||
        !s.in_grid({r.origin.x + r.width - 1, r.origin.y + r.height - 1}))
      throw ConfigError("destination '" + s.destinations[i].name + "' outside grid");
    for (std::size_t j = 0; j < i; ++j)
      if (s.destinations[i].id == s.destinations[j].id) throw ConfigError("duplicate destination id");
  }
  if (s.gripper.held) {
    const auto& o = s.object(*s.gripper.held);
    if (o.pos != s.gripper.pos) throw ConfigError("held object not at gripper cell");
  }
}

/// Total, deterministic transition function.
inline WorldState step(const WorldState& state, Action action) {
  WorldState next = state;
  auto move = [&](int dx, int dy) {
    Cell c{std::clamp(next.gripper.pos.x + dx, 0, next.grid_size - 1),
           std::clamp(next.gripper.pos.y + dy, 0, next.grid_size - 1)};
    next.gripper.pos = c;
    if (next.gripper.held) next.find_object(*next.gripper.held)->pos = c;
  };
  switch (action) {
    case Action::Up: move(0, 1); break;
    case Action::Down: move(0, -1); break;
    case Action::Left: move(-1, 0); break;
    case Action::Right: move(1, 0); break;
    case Action::Pick:
      if (!next.gripper.held) {
        // lowest id wins when objects share a cell
        const ObjectInstance* best = nullptr;
        for (const auto& o : next.objects)
          if (o.pos == next.gripper.pos && (!best || o.id < best->id)) best = &o;
        if (best) next.gripper.held = best->id;
      }
      break;
    case Action::Place:
      if (next.gripper.held) next.gripper.held.reset();
      break;
  }
  ++next.step_count;
  return next;
}

/// True iff the target object rests inside the destination region and is
/// not in the gripper.
inline bool goal_satisfied(const WorldState& state, const Goal& goal) {
  const auto& obj = state.object(goal.object_id);
  const auto& dst = state.destination(goal.destination_id);
  if (state.gripper.held && *state.gripper.held == goal.object_id) return false;
  return dst.region.contains(obj.pos);
}

/// One executed step: the state the policy observed and what it did.
struct EpisodeStep {
  WorldState state;
  Action action = Action::Pick;
  double alpha = 0.0;
};

struct Episode {
  std::string task_id;
  std::string mode = "none";
  std::vector<EpisodeStep> steps;
  WorldState final_state;
  bool success = false;
};

/// Re-executes the recorded actions from the first snapshot.
inline WorldState replay(const Episode& ep) {
  if (ep.steps.empty()) return ep.final_state;
  WorldState s = ep.steps.front().state;
  for (const auto& st : ep.steps) s = step(s, st.action);
  return s;
}

}  // namespace latentlab
