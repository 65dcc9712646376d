#pragma once

#include "mrx/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrx {

enum class CellState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

const char* to_string(CellState s);

struct MapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense occupancy grid. Voxel (x, y, z) has linear index x + nx * (y + ny * z)
/// and spans [origin + i * res, origin + (i + 1) * res) on each axis.
class VoxelMap {
 public:
  VoxelMap() = default;
  VoxelMap(const Vec3& origin, double resolution, const Index3& dims,
           CellState fill = CellState::Unknown);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Index3& dims() const { return dims_; }
  std::size_t size() const { return cells_.size(); }
  Vec3 extent() const { return dims_.cast<double>() * resolution_; }

  bool in_bounds(const Index3& v) const {
    return v.x() >= 0 && v.y() >= 0 && v.z() >= 0 && v.x() < dims_.x() &&
           v.y() < dims_.y() && v.z() < dims_.z();
  }
  bool contains(const Vec3& p) const { return in_bounds(voxel_of(p)); }

  std::uint32_t linear(const Index3& v) const {
    return static_cast<std::uint32_t>(v.x() + dims_.x() * (v.y() + dims_.y() * v.z()));
  }
  Index3 unravel(std::uint32_t i) const {
    const int nx = dims_.x(), ny = dims_.y();
    const int idx = static_cast<int>(i);
    return {idx % nx, (idx / nx) % ny, idx / (nx * ny)};
  }
  Index3 voxel_of(const Vec3& p) const {
    const Vec3 q = (p - origin_) / resolution_;
    return {static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
            static_cast<int>(std::floor(q.z()))};
  }
  Vec3 center(const Index3& v) const {
    return origin_ + (v.cast<double>().array() + 0.5).matrix() * resolution_;
  }
  Vec3 center(std::uint32_t i) const { return center(unravel(i)); }

  CellState state(std::uint32_t i) const { return cells_[i]; }
  CellState state(const Index3& v) const { return cells_[linear(v)]; }
  void set_state(std::uint32_t i, CellState s) { cells_[i] = s; }
  const std::vector<CellState>& cells() const { return cells_; }

  bool is_frontier(std::uint32_t i) const { return frontier_[i] != 0; }
  void set_frontier(std::uint32_t i, bool f);
  std::size_t frontier_count() const { return frontier_count_; }
  std::vector<std::uint32_t> frontiers() const;

  std::size_t count(CellState s) const;

  /// Calls fn(neighbor_index) for each in-bounds 6-neighbor.
  template <typename Fn>
  void for_each_neighbor6(std::uint32_t i, Fn&& fn) const {
    const Index3 v = unravel(i);
    const int nx = dims_.x(), nxy = dims_.x() * dims_.y();
    if (v.x() > 0) fn(i - 1);
    if (v.x() + 1 < dims_.x()) fn(i + 1);
    if (v.y() > 0) fn(i - nx);
    if (v.y() + 1 < dims_.y()) fn(i + nx);
    if (v.z() > 0) fn(i - nxy);
    if (v.z() + 1 < dims_.z()) fn(i + nxy);
  }

  /// Frontier predicate evaluated from cell states alone.
  bool frontier_definition(std::uint32_t i) const;

  bool operator==(const VoxelMap& o) const {
    return origin_ == o.origin_ && resolution_ == o.resolution_ && dims_ == o.dims_ &&
           cells_ == o.cells_;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 1.0;
  Index3 dims_ = Index3::Ones();
  std::vector<CellState> cells_;
  std::vector<std::uint8_t> frontier_;
  std::size_t frontier_count_ = 0;
};

struct AgentState {
  int id = 0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  std::vector<Vec3> path_log;
  double distance_traveled = 0.0;
  bool idle = false;

  /// Appends a position and accumulates the segment length.
  void record(const Vec3& p);
};

struct DeltaEntry {
  std::uint32_t index;
  CellState state;
  bool operator==(const DeltaEntry&) const = default;
};

/// Voxels whose state changed away from UNKNOWN, sorted by index.
struct MapDelta {
  int source = -1;
  std::uint32_t tick = 0;
  std::vector<DeltaEntry> entries;
};

struct RaySpec {
  double azimuth_step_deg = 2.0;
  double elevation_step_deg = 5.0;
};

/// Ray directions on the full sphere. Samples sit at half-step offsets so no
/// ray is axis-aligned or passes exactly through voxel edges from a center.
std::vector<Vec3> ray_directions(const RaySpec& spec);

/// Ideal ray-cast sensor. Traverses each ray through the ground truth,
/// marking voxels FREE until the first OCCUPIED voxel (marked OCCUPIED), up
/// to `range`. Returns only voxels that are UNKNOWN in `known`.
MapDelta sense(const VoxelMap& truth, const VoxelMap& known, const AgentState& agent,
               double range, const RaySpec& rays, std::uint32_t tick = 0);
MapDelta sense(const VoxelMap& truth, const VoxelMap& known, const AgentState& agent,
               double range, std::span<const Vec3> directions, std::uint32_t tick = 0);

/// Calls visit(index, t_entry) for voxels along origin + t * dir, t in [0, t_max),
/// starting with the voxel containing origin. Stops when visit returns false
/// or the ray leaves the map.
template <typename Visit>
void traverse_ray(const VoxelMap& map, const Vec3& origin, const Vec3& dir, double t_max,
                  Visit&& visit);

/// Applies a delta to `map`: UNKNOWN cells adopt the delta's state, and a
/// FREE/OCCUPIED disagreement resolves to OCCUPIED. Returns indices that changed.
std::vector<std::uint32_t> merge_deltas(VoxelMap& map, const MapDelta& delta);

/// Entries for voxels known in `from` whose state differs in `to`.
MapDelta diff(const VoxelMap& from, const VoxelMap& to, int source = -1,
              std::uint32_t tick = 0);

/// Re-evaluates frontier flags of changed voxels and their 6-neighbors.
/// Returns the full frontier set after the update.
std::vector<std::uint32_t> update_frontiers(VoxelMap& map,
                                            std::span<const std::uint32_t> changed);
void recompute_frontiers(VoxelMap& map);

/// Text grid: optional `resolution` / `origin` header lines, then one block of
/// rows per z-slice (z = 0 first) separated by blank lines. Row r is y = r,
/// column c is x = c; `#` occupied, `.` free.
VoxelMap load_text_map(std::istream& in);
VoxelMap load_text_map_file(const std::string& path);
void save_text_map(std::ostream& out, const VoxelMap& map);

// ---------------------------------------------------------------------------

template <typename Visit>
void traverse_ray(const VoxelMap& map, const Vec3& origin, const Vec3& dir, double t_max,
                  Visit&& visit) {
  Index3 v = map.voxel_of(origin);
  if (!map.in_bounds(v)) return;
  const double res = map.resolution();
  Index3 step;
  Vec3 t_next, t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0) {
      step[a] = 1;
      const double boundary = map.origin()[a] + (v[a] + 1) * res;
      t_next[a] = (boundary - origin[a]) / dir[a];
      t_delta[a] = res / dir[a];
    } else if (dir[a] < 0) {
      step[a] = -1;
      const double boundary = map.origin()[a] + v[a] * res;
      t_next[a] = (boundary - origin[a]) / dir[a];
      t_delta[a] = -res / dir[a];
    } else {
      step[a] = 0;
      t_next[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }
  double t_entry = 0.0;
  while (t_entry < t_max) {
    if (!visit(map.linear(v), t_entry)) return;
    int axis = 0;
    if (t_next[1] < t_next[axis]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    t_entry = t_next[axis];
    v[axis] += step[axis];
    t_next[axis] += t_delta[axis];
    if (!map.in_bounds(v)) return;
  }
}

}  // namespace mrx
