#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/grid.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cells a disk of the given radius may occupy. A cell is traversable when the distance from its
/// center to the nearest blocking cell center is at least radius + 1.5 cells, which keeps the disk
/// clear of every blocking cell for any point inside the traversable cell.
class Traversability {
 public:
  Traversability(const OccupancyGrid& grid, double robot_radius)
      : grid_(&grid), df_(grid), radius_(robot_radius), margin_(robot_radius + 1.5 * grid.resolution()) {
    if (!(robot_radius >= 0.0)) throw InvalidArgument("robot radius must be >= 0");
  }

  const OccupancyGrid& grid() const { return *grid_; }
  const DistanceField& distance() const { return df_; }
  double robot_radius() const { return radius_; }

  bool clear(CellIndex c) const { return grid_->contains(c) && df_.at(c) >= margin_; }
  bool clear(Vec2 p) const { return clear(grid_->world_to_cell(p)); }

  /// Straight segment stays on traversable cells (sampled at a quarter cell).
  bool segment_clear(Vec2 a, Vec2 b) const {
    const double len = cmcl::distance(a, b);
    const auto steps = static_cast<int>(std::ceil(len / (0.25 * grid_->resolution())));
    for (int i = 0; i <= steps; ++i) {
      const double t = steps == 0 ? 0.0 : static_cast<double>(i) / steps;
      if (!clear(a + t * (b - a))) return false;
    }
    return true;
  }

 private:
  const OccupancyGrid* grid_;
  DistanceField df_;
  double radius_;
  double margin_;
};

inline double path_length(const std::vector<Vec2>& path) {
  double acc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) acc += distance(path[i - 1], path[i]);
  return acc;
}

namespace detail {

inline std::vector<CellIndex> astar_cells(const Traversability& tr, CellIndex start, CellIndex goal) {
  const OccupancyGrid& g = tr.grid();
  const std::size_t n = g.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(n, kInf);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<char> closed(n, 0);

  const auto octile = [&](CellIndex c) {
    const double dx = std::abs(c.ix - goal.ix);
    const double dy = std::abs(c.iy - goal.iy);
    return (dx + dy) + (std::sqrt(2.0) - 2.0) * std::min(dx, dy);
  };
  struct Node {
    double f;
    double h;
    std::size_t idx;
    bool operator>(const Node& o) const {
      if (f != o.f) return f > o.f;
      if (h != o.h) return h > o.h;
      return idx > o.idx;
    }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<>> open;
  const std::size_t s = g.index(start);
  const std::size_t t = g.index(goal);
  cost[s] = 0.0;
  open.push({octile(start), octile(start), s});

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!open.empty()) {
    const Node cur = open.top();
    open.pop();
    if (closed[cur.idx]) continue;
    closed[cur.idx] = 1;
    if (cur.idx == t) break;
    const CellIndex c = g.cell_of_index(cur.idx);
    for (int k = 0; k < 8; ++k) {
      const CellIndex nb{c.ix + kDx[k], c.iy + kDy[k]};
      if (!tr.clear(nb)) continue;
      const bool diag = k >= 4;
      // no corner cutting
      if (diag && (!tr.clear(CellIndex{c.ix + kDx[k], c.iy}) || !tr.clear(CellIndex{c.ix, c.iy + kDy[k]}))) continue;
      const std::size_t ni = g.index(nb);
      if (closed[ni]) continue;
      const double nc = cost[cur.idx] + (diag ? std::sqrt(2.0) : 1.0);
      if (nc < cost[ni]) {
        cost[ni] = nc;
        parent[ni] = static_cast<std::int64_t>(cur.idx);
        const double h = octile(nb);
        open.push({nc + h, h, ni});
      }
    }
  }
  if (!closed[t]) throw PlanningError("goal is unreachable from start");
  std::vector<CellIndex> cells;
  for (std::int64_t i = static_cast<std::int64_t>(t); i >= 0; i = parent[static_cast<std::size_t>(i)]) {
    cells.push_back(g.cell_of_index(static_cast<std::size_t>(i)));
  }
  std::reverse(cells.begin(), cells.end());
  return cells;
}

}  // namespace detail

/// 8-connected A* over cells inflated by the robot radius, then simplified by line-of-sight
/// shortcutting. The first and last waypoints are the exact start and goal positions.
inline std::vector<Vec2> plan_path(const Traversability& tr, Vec2 start, Vec2 goal) {
  if (!tr.clear(start)) throw PlanningError("start is not on a traversable cell");
  if (!tr.clear(goal)) throw PlanningError("goal is not on a traversable cell");
  const OccupancyGrid& g = tr.grid();
  const CellIndex cs = g.world_to_cell(start);
  const CellIndex cg = g.world_to_cell(goal);
  if (start == goal) return {start};
  if (cs == cg) return {start, goal};

  const auto cells = detail::astar_cells(tr, cs, cg);
  std::vector<Vec2> raw;
  raw.reserve(cells.size());
  raw.push_back(start);
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) raw.push_back(g.cell_center(cells[i]));
  raw.push_back(goal);

  std::vector<Vec2> out{start};
  std::size_t i = 0;
  while (i + 1 < raw.size()) {
    std::size_t j = raw.size() - 1;
    while (j > i + 1 && !tr.segment_clear(raw[i], raw[j])) --j;
    out.push_back(raw[j]);
    i = j;
  }
  return out;
}

inline std::vector<Vec2> plan_path(const OccupancyGrid& grid, const Pose& start, const Pose& goal,
                                   double robot_radius = 0.16) {
  return plan_path(Traversability(grid, robot_radius), start.position(), goal.position());
}

}  // namespace cmcl
