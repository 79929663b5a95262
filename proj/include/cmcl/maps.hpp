#pragma once

#include <string>
#include <vector>

#include "cmcl/grid.hpp"

namespace cmcl {

/// Inclusive cell rectangle.
struct CellRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
};

inline void fill(OccupancyGrid& g, const CellRect& r, CellState s) {
  for (int iy = std::max(0, r.y0); iy <= std::min(g.height() - 1, r.y1); ++iy) {
    for (int ix = std::max(0, r.x0); ix <= std::min(g.width() - 1, r.x1); ++ix) g.set(ix, iy, s);
  }
}

/// Free interior with a 2-cell outer wall.
inline OccupancyGrid walled_box(int width, int height, double resolution) {
  OccupancyGrid g(width, height, resolution);
  fill(g, {0, 0, width - 1, height - 1}, CellState::kOccupied);
  fill(g, {2, 2, width - 3, height - 3}, CellState::kFree);
  return g;
}

/// Image of a rectangle under the 180 degree rotation about the grid centre.
inline CellRect rotate_half_turn(const OccupancyGrid& g, const CellRect& r) {
  return {g.width() - 1 - r.x1, g.height() - 1 - r.y1, g.width() - 1 - r.x0, g.height() - 1 - r.y0};
}

/// Two rooms joined by a central door; every obstacle in the left room has a copy in the right
/// room rotated by half a turn about the map centre, so the map is point symmetric.
inline OccupancyGrid symmetric_two_room_map() {
  OccupancyGrid g = walled_box(184, 92, 0.05);
  const std::vector<CellRect> left = {
      {90, 2, 93, 35},   // lower half of the dividing wall
      {20, 55, 39, 66},  // table
      {50, 2, 79, 9},    // shelf on the bottom wall
      {66, 40, 73, 47},  // pillar
      {2, 70, 11, 89},   // cabinet in the corner
      {14, 20, 21, 27},  // small box
  };
  for (const auto& r : left) {
    fill(g, r, CellState::kOccupied);
    fill(g, rotate_half_turn(g, r), CellState::kOccupied);
  }
  return g;
}

/// Rooms off a corridor with desks and doors.
inline OccupancyGrid office_map() {
  OccupancyGrid g = walled_box(284, 184, 0.05);
  const std::vector<CellRect> walls = {
      // corridor walls with door gaps
      {2, 108, 20, 111}, {42, 108, 110, 111}, {132, 108, 200, 111}, {222, 108, 281, 111},
      {2, 70, 60, 73}, {82, 70, 180, 73}, {202, 70, 281, 73},
      // room dividers above the corridor
      {92, 112, 95, 181}, {186, 112, 189, 181},
      // room divider below
      {140, 2, 143, 69},
  };
  const std::vector<CellRect> furniture = {
      {20, 140, 59, 155}, {120, 150, 139, 175}, {150, 120, 175, 129}, {220, 140, 259, 147},
      {250, 160, 271, 179}, {20, 20, 35, 50}, {70, 30, 109, 41}, {170, 15, 199, 30}, {230, 40, 245, 55},
  };
  for (const auto& r : walls) fill(g, r, CellState::kOccupied);
  for (const auto& r : furniture) fill(g, r, CellState::kOccupied);
  return g;
}

/// Large hall with few features.
inline OccupancyGrid sparse_hall_map() {
  OccupancyGrid g = walled_box(284, 184, 0.05);
  const std::vector<CellRect> obstacles = {
      {60, 60, 67, 67}, {200, 120, 207, 127}, {120, 2, 123, 60}, {170, 140, 229, 143}, {30, 130, 45, 135},
  };
  for (const auto& r : obstacles) fill(g, r, CellState::kOccupied);
  return g;
}

struct BundledMap {
  std::string name;
  std::string file;
  std::size_t particles;
  OccupancyGrid (*build)();
};

inline const std::vector<BundledMap>& bundled_maps() {
  static const std::vector<BundledMap> maps = {
      {"symmetric", "symmetric_two_room.map", 2000, &symmetric_two_room_map},
      {"office", "office.map", 2500, &office_map},
      {"sparse", "sparse_hall.map", 2500, &sparse_hall_map},
  };
  return maps;
}

}  // namespace cmcl
