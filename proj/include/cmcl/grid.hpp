#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cmcl/geometry.hpp"
#include "cmcl/util.hpp"

namespace cmcl {

enum class CellState : std::uint8_t { kFree, kOccupied, kUnknown };

/// Map document could not be parsed. line/column are 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct CellIndex {
  int ix = 0;
  int iy = 0;
  friend bool operator==(CellIndex, CellIndex) = default;
};

/// Occupancy grid. Cell (0, 0) has its lower-left corner at `origin`; iy grows with world y.
/// Unknown cells block rays and count as obstacles for the distance field.
class OccupancyGrid {
 public:
  OccupancyGrid(int width, int height, double resolution, Pose origin = {})
      : width_(width), height_(height), resolution_(resolution), origin_(origin) {
    if (width < 1 || height < 1) throw InvalidArgument("grid dimensions must be >= 1");
    if (!(resolution > 0.0)) throw InvalidArgument("grid resolution must be > 0");
    cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                  CellState::kFree);
    cos_ = std::cos(origin_.theta);
    sin_ = std::sin(origin_.theta);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const Pose& origin() const { return origin_; }
  std::size_t size() const { return cells_.size(); }

  bool contains(CellIndex c) const {
    return c.ix >= 0 && c.iy >= 0 && c.ix < width_ && c.iy < height_;
  }

  CellState at(CellIndex c) const { return cells_[index(c)]; }
  CellState at(int ix, int iy) const { return at(CellIndex{ix, iy}); }
  void set(CellIndex c, CellState s) { cells_[index(c)] = s; }
  void set(int ix, int iy, CellState s) { set(CellIndex{ix, iy}, s); }

  bool is_free(CellIndex c) const { return contains(c) && at(c) == CellState::kFree; }
  /// Occupied or unknown; out-of-bounds cells block too.
  bool is_blocking(CellIndex c) const { return !contains(c) || at(c) != CellState::kFree; }

  std::size_t index(CellIndex c) const {
    return static_cast<std::size_t>(c.iy) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.ix);
  }
  CellIndex cell_of_index(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width_)),
            static_cast<int>(i / static_cast<std::size_t>(width_))};
  }

  /// World point to continuous grid coordinates (in cells).
  Vec2 to_grid(Vec2 w) const {
    const double dx = w.x - origin_.x;
    const double dy = w.y - origin_.y;
    return {(cos_ * dx + sin_ * dy) / resolution_, (-sin_ * dx + cos_ * dy) / resolution_};
  }

  /// Grid-frame direction of a world-frame heading.
  double to_grid_heading(double world_theta) const { return world_theta - origin_.theta; }

  CellIndex world_to_cell(Vec2 w) const {
    const Vec2 g = to_grid(w);
    return {static_cast<int>(std::floor(g.x)), static_cast<int>(std::floor(g.y))};
  }

  Vec2 cell_center(CellIndex c) const {
    const double gx = (c.ix + 0.5) * resolution_;
    const double gy = (c.iy + 0.5) * resolution_;
    return {origin_.x + cos_ * gx - sin_ * gy, origin_.y + sin_ * gx + cos_ * gy};
  }

  std::size_t count(CellState s) const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), s));
  }

  std::vector<CellIndex> cells_in_state(CellState s) const {
    std::vector<CellIndex> out;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (cells_[i] == s) out.push_back(cell_of_index(i));
    }
    return out;
  }

  /// Area covered by free cells, m^2.
  double free_area() const { return static_cast<double>(count(CellState::kFree)) * resolution_ * resolution_; }

 private:
  int width_;
  int height_;
  double resolution_;
  Pose origin_;
  double cos_ = 1.0;
  double sin_ = 0.0;
  std::vector<CellState> cells_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<double> parse_numbers(std::string_view text, std::size_t line, std::size_t column) {
  std::vector<double> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ParseError(line, column, "expected a number, got '" + tok + "'");
    }
    if (used != tok.size() || !std::isfinite(v)) {
      throw ParseError(line, column, "expected a number, got '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Parse an ASCII map document:
///
///     resolution: 0.05
///     origin: 0 0 0
///
///     #####
///     #...#
///     #####
///
/// `.` free, `#` occupied, `?` unknown. The first row is the maximum-y row.
inline OccupancyGrid load_grid(std::string_view text) {
  std::optional<double> resolution;
  std::optional<Pose> origin;
  std::vector<std::string_view> rows;
  std::size_t first_row_line = 0;

  std::size_t line_no = 0;
  bool in_body = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);

    if (!in_body) {
      const std::string_view line = detail::trim(raw);
      if (line.empty()) {
        if (resolution && origin) in_body = true;
        if (end == text.size()) break;
        continue;
      }
      const std::size_t colon = line.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, 1, "expected 'key: value' header line");
      }
      const std::string_view key = detail::trim(line.substr(0, colon));
      const auto values = detail::parse_numbers(line.substr(colon + 1), line_no, colon + 2);
      if (key == "resolution") {
        if (values.size() != 1 || !(values[0] > 0.0)) {
          throw ParseError(line_no, colon + 2, "resolution must be one positive number");
        }
        resolution = values[0];
      } else if (key == "origin") {
        if (values.size() != 3) throw ParseError(line_no, colon + 2, "origin needs x y theta");
        origin = make_pose(values[0], values[1], values[2]);
      } else {
        throw ParseError(line_no, 1, "unknown header key '" + std::string(key) + "'");
      }
    } else {
      if (raw.empty() && end == text.size()) break;  // trailing newline
      if (rows.empty()) first_row_line = line_no;
      rows.push_back(raw);
    }
    if (end == text.size()) break;
  }

  if (!resolution) throw ParseError(line_no, 1, "missing 'resolution' header");
  if (!origin) throw ParseError(line_no, 1, "missing 'origin' header");
  if (rows.empty()) throw ParseError(line_no, 1, "map has no rows");

  const std::size_t width = rows.front().size();
  if (width == 0) throw ParseError(first_row_line, 1, "empty map row");
  const auto height = rows.size();
  OccupancyGrid grid(static_cast<int>(width), static_cast<int>(height), *resolution, *origin);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t ln = first_row_line + r;
    if (rows[r].size() != width) {
      throw ParseError(ln, std::min(rows[r].size(), width) + 1,
                       "row has " + std::to_string(rows[r].size()) + " cells, expected " +
                           std::to_string(width));
    }
    const int iy = static_cast<int>(height - 1 - r);
    for (std::size_t c = 0; c < width; ++c) {
      CellState s{};
      switch (rows[r][c]) {
        case '.': s = CellState::kFree; break;
        case '#': s = CellState::kOccupied; break;
        case '?': s = CellState::kUnknown; break;
        default:
          throw ParseError(ln, c + 1, std::string("unknown cell character '") + rows[r][c] + "'");
      }
      grid.set(static_cast<int>(c), iy, s);
    }
  }
  return grid;
}

inline OccupancyGrid load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_grid(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.column(), path + ": " + e.what());
  }
}

/// Serialize back to the ASCII document format.
inline std::string to_document(const OccupancyGrid& g) {
  std::ostringstream out;
  out.precision(17);
  out << "resolution: " << g.resolution() << "\n";
  out << "origin: " << g.origin().x << " " << g.origin().y << " " << g.origin().theta << "\n\n";
  for (int iy = g.height() - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < g.width(); ++ix) {
      switch (g.at(ix, iy)) {
        case CellState::kFree: out << '.'; break;
        case CellState::kOccupied: out << '#'; break;
        case CellState::kUnknown: out << '?'; break;
      }
    }
    out << "\n";
  }
  return out.str();
}

/// Euclidean distance (m) from every cell center to the nearest blocking cell center.
class DistanceField {
 public:
  explicit DistanceField(const OccupancyGrid& grid)
      : width_(grid.width()),
        height_(grid.height()),
        resolution_(grid.resolution()),
        origin_(grid.origin()),
        cap_((grid.width() + grid.height()) * grid.resolution()) {
    cos_ = std::cos(origin_.theta);
    sin_ = std::sin(origin_.theta);
    compute(grid);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  /// Value used where no obstacle exists and for queries outside the map.
  double cap() const { return cap_; }

  double at(int ix, int iy) const {
    return dist_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(ix)];
  }
  double at(CellIndex c) const { return at(c.ix, c.iy); }

  /// Distance at the cell containing world point `p`; cap outside the map.
  double at_world(Vec2 p) const {
    const double dx = p.x - origin_.x;
    const double dy = p.y - origin_.y;
    const double gx = (cos_ * dx + sin_ * dy) / resolution_;
    const double gy = (-sin_ * dx + cos_ * dy) / resolution_;
    if (!(gx >= 0.0 && gy >= 0.0 && gx < width_ && gy < height_)) return cap_;
    return at(static_cast<int>(gx), static_cast<int>(gy));
  }

 private:
  // 1-D squared distance transform of sampled function f (Felzenszwalb & Huttenlocher).
  static void transform_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                           std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
      if (f[q] == kInf) continue;
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        continue;
      }
      double s = 0.0;
      while (true) {
        const int p = v[k];
        s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
        if (s <= z[k] && k > 0) {
          --k;
        } else {
          break;
        }
      }
      if (s <= z[k]) {
        // k == 0 and the new parabola dominates everywhere
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
    }
    if (k < 0) {
      std::fill(d.begin(), d.end(), kInf);
      return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
      while (z[j + 1] < q) ++j;
      const double diff = q - v[j];
      d[q] = diff * diff + f[v[j]];
    }
  }

  void compute(const OccupancyGrid& grid) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const std::size_t w = static_cast<std::size_t>(width_);
    const std::size_t h = static_cast<std::size_t>(height_);
    std::vector<double> sq(w * h, kInf);
    bool any = false;
    for (std::size_t i = 0; i < sq.size(); ++i) {
      if (grid.is_blocking(grid.cell_of_index(i))) {
        sq[i] = 0.0;
        any = true;
      }
    }
    dist_.assign(w * h, cap_);
    if (!any) return;

    const std::size_t n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    // columns
    f.resize(h);
    d.resize(h);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t y = 0; y < h; ++y) f[y] = sq[y * w + x];
      transform_1d(f, d, v, z);
      for (std::size_t y = 0; y < h; ++y) sq[y * w + x] = d[y];
    }
    // rows
    f.resize(w);
    d.resize(w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) f[x] = sq[y * w + x];
      transform_1d(f, d, v, z);
      for (std::size_t x = 0; x < w; ++x) {
        dist_[y * w + x] = std::min(cap_, std::sqrt(d[x]) * resolution_);
      }
    }
  }

  int width_;
  int height_;
  double resolution_;
  Pose origin_;
  double cap_;
  double cos_ = 1.0;
  double sin_ = 0.0;
  std::vector<double> dist_;
};

inline DistanceField distance_field(const OccupancyGrid& grid) { return DistanceField(grid); }

/// Origin of a ray lies on a blocking cell (or outside the map).
class InvalidPose : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Distance from `origin` along world heading origin.theta + bearing to the boundary of the first
/// blocking cell, clamped to r_max. Cell-boundary stepping (Amanatides-Woo).
inline double raycast(const OccupancyGrid& grid, const Pose& origin, double bearing, double r_max) {
  const Vec2 g = grid.to_grid(origin.position());
  CellIndex cell{static_cast<int>(std::floor(g.x)), static_cast<int>(std::floor(g.y))};
  if (!grid.contains(cell)) throw InvalidPose("ray origin outside the map");
  if (grid.is_blocking(cell)) throw InvalidPose("ray origin on an occupied cell");

  const double heading = grid.to_grid_heading(origin.theta + bearing);
  const double dx = std::cos(heading);
  const double dy = std::sin(heading);
  const double limit = r_max / grid.resolution();  // in cells
  constexpr double kInf = std::numeric_limits<double>::infinity();

  const int step_x = dx > 0.0 ? 1 : -1;
  const int step_y = dy > 0.0 ? 1 : -1;
  const double t_delta_x = dx != 0.0 ? std::abs(1.0 / dx) : kInf;
  const double t_delta_y = dy != 0.0 ? std::abs(1.0 / dy) : kInf;
  double t_max_x = kInf;
  double t_max_y = kInf;
  if (dx > 0.0) t_max_x = (cell.ix + 1 - g.x) / dx;
  if (dx < 0.0) t_max_x = (cell.ix - g.x) / dx;
  if (dy > 0.0) t_max_y = (cell.iy + 1 - g.y) / dy;
  if (dy < 0.0) t_max_y = (cell.iy - g.y) / dy;

  while (true) {
    double t = 0.0;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_delta_x;
      cell.ix += step_x;
    } else {
      t = t_max_y;
      t_max_y += t_delta_y;
      cell.iy += step_y;
    }
    if (t >= limit) return r_max;
    if (grid.is_blocking(cell)) return t * grid.resolution();
  }
}

/// Line of sight between two world points: no blocking cell strictly before `to`.
inline bool line_of_sight(const OccupancyGrid& grid, Vec2 from, Vec2 to) {
  const double r = distance(from, to);
  if (r == 0.0) return true;
  const double heading = std::atan2(to.y - from.y, to.x - from.x);
  try {
    return raycast(grid, Pose{from.x, from.y, 0.0}, heading, r) >= r;
  } catch (const InvalidPose&) {
    return false;
  }
}

}  // namespace cmcl
