#pragma once

#include "mrx/voxel_map.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mrx {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cubic grids of `cells` voxels per side tiling the map; the last grid on
/// each axis may be truncated.
class GridPartition {
 public:
  GridPartition() = default;
  GridPartition(const VoxelMap& map, double grid_edge);

  std::uint32_t size() const { return static_cast<std::uint32_t>(gdims_.prod()); }
  int cells() const { return cells_; }
  double grid_edge() const { return grid_edge_; }
  const Index3& grid_dims() const { return gdims_; }

  std::uint32_t grid_of(const Index3& voxel) const {
    return linear(Index3(voxel.x() / cells_, voxel.y() / cells_, voxel.z() / cells_));
  }
  std::uint32_t grid_of(std::uint32_t voxel) const { return lookup_[voxel]; }
  Index3 coord(std::uint32_t g) const {
    const int i = static_cast<int>(g);
    return {i % gdims_.x(), (i / gdims_.x()) % gdims_.y(), i / (gdims_.x() * gdims_.y())};
  }
  std::uint32_t linear(const Index3& c) const {
    return static_cast<std::uint32_t>(c.x() + gdims_.x() * (c.y() + gdims_.y() * c.z()));
  }
  /// Voxel box [lo, hi) of grid g.
  Index3 lo(std::uint32_t g) const { return coord(g) * cells_; }
  Index3 hi(std::uint32_t g) const { return (lo(g).array() + cells_).min(vdims_.array()).matrix(); }
  std::vector<std::uint32_t> voxels(const VoxelMap& map, std::uint32_t g) const;
  /// Face-adjacent grids, ascending.
  std::vector<std::uint32_t> neighbors(std::uint32_t g) const;

 private:
  double grid_edge_ = 0.0;
  int cells_ = 1;
  Index3 vdims_ = Index3::Ones();
  Index3 gdims_ = Index3::Ones();
  std::vector<std::uint32_t> lookup_;
};

enum class RegionKind : std::uint8_t { Free = 0, Unknown = 1 };
// Boundary edges join a FREE region to an UNKNOWN region across a grid face.
enum class EdgeKind : std::uint8_t { Free = 0, Unknown = 1, Portal = 2, Boundary = 3 };

const char* to_string(RegionKind k);
const char* to_string(EdgeKind k);

struct RegionVertex {
  RegionKind kind = RegionKind::Free;
  std::uint32_t grid = 0;
  Vec3 anchor = Vec3::Zero();
  std::vector<std::uint32_t> members;  // ascending voxel indices
  std::uint32_t snap = 0;              // member voxel nearest the anchor
};

struct GraphEdge {
  std::uint32_t to;
  EdgeKind kind;
  double length;
};

struct EdgeRecord {
  std::uint32_t u, v;  // u < v
  EdgeKind kind;
  double length;
};

/// Maximal 6-connected FREE and UNKNOWN components of one grid, ordered by
/// their lowest member index.
std::vector<RegionVertex> segment_grid(const VoxelMap& map, const GridPartition& part,
                                       std::uint32_t grid);

/// Grids containing any of the given voxels, ascending and unique.
std::vector<std::uint32_t> dirty_grids(const GridPartition& part,
                                       std::span<const std::uint32_t> voxels);

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct PathTree {
  std::vector<double> dist;       // kUnreachable where not reached
  std::vector<std::int32_t> parent;  // -1 at the root and where not reached
};

class ConnectivityGraph {
 public:
  ConnectivityGraph() = default;
  ConnectivityGraph(const VoxelMap& map, double grid_edge);

  const GridPartition& partition() const { return part_; }

  void rebuild(const VoxelMap& map);
  /// Re-segments the given grids and recomputes every edge touching them.
  void update(const VoxelMap& map, std::span<const std::uint32_t> dirty);

  std::uint32_t capacity() const { return static_cast<std::uint32_t>(vertices_.size()); }
  std::size_t vertex_count() const { return live_; }
  bool alive(std::uint32_t v) const { return v < vertices_.size() && vertices_[v].has_value(); }
  const RegionVertex& vertex(std::uint32_t v) const;
  std::vector<std::uint32_t> vertex_ids() const;
  const std::vector<GraphEdge>& edges(std::uint32_t v) const;
  /// Canonical edge list sorted by (u, v, kind).
  std::vector<EdgeRecord> edge_list() const;
  const std::vector<std::uint32_t>& grid_vertices(std::uint32_t g) const { return by_grid_[g]; }
  /// Vertex owning a voxel, or -1 for OCCUPIED voxels.
  std::int32_t vertex_at(std::uint32_t voxel) const { return owner_[voxel]; }

  /// Region containing p's voxel; otherwise the vertex with the nearest anchor.
  std::optional<std::uint32_t> nearest_vertex(const VoxelMap& map, const Vec3& p) const;

  double distance(std::uint32_t a, std::uint32_t b) const;
  PathTree shortest_paths(std::uint32_t source) const;
  std::vector<std::uint32_t> path(const PathTree& tree, std::uint32_t target) const;

  /// Plain-text dump; vertices then edges, one per line.
  void dump(std::ostream& out) const;

 private:
  void clear_grid(std::uint32_t g);
  void insert_region(RegionVertex r);
  void link_grid_pair(const VoxelMap& map, std::uint32_t ga, std::uint32_t gb);
  void link_within(const VoxelMap& map, std::uint32_t g);
  void check(std::uint32_t v) const;

  GridPartition part_;
  std::vector<std::optional<RegionVertex>> vertices_;
  std::vector<std::vector<GraphEdge>> adj_;
  std::vector<std::uint32_t> free_ids_;
  std::vector<std::vector<std::uint32_t>> by_grid_;
  std::vector<std::int32_t> owner_;
  std::size_t live_ = 0;
};

}  // namespace mrx
