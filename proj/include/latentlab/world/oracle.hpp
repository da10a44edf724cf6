#pragma once

#include "latentlab/world/world.hpp"

namespace latentlab {

namespace detail {

// x-axis first, then y.
inline Action step_towards(Cell from, Cell to) {
  if (from.x < to.x) return Action::Right;
  if (from.x > to.x) return Action::Left;
  if (from.y < to.y) return Action::Up;
  return Action::Down;
}

// Region cell closest to `from`; ties go to the lowest x, then the lowest y.
inline Cell nearest_cell(const Region& r, Cell from) {
  Cell best = r.origin;
  for (int x = r.origin.x; x < r.origin.x + r.width; ++x)
    for (int y = r.origin.y; y < r.origin.y + r.height; ++y)
      if (manhattan({x, y}, from) < manhattan(best, from)) best = {x, y};
  return best;
}

}  // namespace detail

/// Scripted expert: walk to the target object, pick it, walk to the nearest
/// destination cell, place it.
inline Action oracle_policy(const WorldState& state, const Goal& goal) {
  const auto& obj = state.object(goal.object_id);
  const auto& dst = state.destination(goal.destination_id);
  const Cell g = state.gripper.pos;
  if (state.gripper.held) {
    if (*state.gripper.held != goal.object_id) return Action::Place;
    if (dst.region.contains(g)) return Action::Place;
    return detail::step_towards(g, detail::nearest_cell(dst.region, g));
  }
  if (dst.region.contains(obj.pos)) return Action::Place;  // already done; no-op
  if (g == obj.pos) return Action::Pick;
  return detail::step_towards(g, obj.pos);
}

/// Upper bound on the oracle's episode length for a grid of the given size.
inline int oracle_step_bound(int grid_size) { return 2 * grid_size * 2 + 2; }

}  // namespace latentlab
