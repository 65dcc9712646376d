#pragma once

#include "mrx/connectivity_graph.hpp"
#include "mrx/voxel_map.hpp"
#include "mrx/wire.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace mrx {

enum class UnitStatus : std::uint8_t { Pending = 0, Completed = 1, Invalid = 2 };
inline constexpr std::int32_t kUnassigned = -1;

const char* to_string(UnitStatus s);
inline bool terminal(UnitStatus s) { return s != UnitStatus::Pending; }

/// The record exchanged between agents: anchor, spatial descriptor (grid id
/// or x-y hull with a z band), workload, owner, status.
struct UnitRecord {
  std::uint64_t id = 0;
  Vec3 anchor = Vec3::Zero();
  std::optional<std::uint32_t> grid;
  std::vector<Vec2> hull;
  double zmin = 0.0, zmax = 0.0;
  std::uint32_t num = 0;
  std::int32_t owner = kUnassigned;
  UnitStatus status = UnitStatus::Pending;

  bool split() const { return !grid.has_value(); }
  void encode(ByteWriter& w) const;
  static UnitRecord decode(ByteReader& r);
  bool operator==(const UnitRecord& o) const;
};

/// Voxels a record speaks for: its grid, or the hull prism.
class UnitScope {
 public:
  UnitScope(const VoxelMap& map, const GridPartition& part, const UnitRecord& rec);
  bool contains(std::uint32_t voxel) const;
  /// Candidate voxels, a superset of the scope; filter with contains().
  const std::vector<std::uint32_t>& candidates() const { return candidates_; }

 private:
  const VoxelMap* map_;
  const GridPartition* part_;
  const UnitRecord* rec_;
  std::vector<std::uint32_t> candidates_;
};

struct TaskUnit {
  UnitRecord rec;
  std::vector<std::uint32_t> members;  // current unknown voxels, ascending
  std::int32_t vertex = -1;            // unknown vertex, graph mode only
  std::uint32_t home_grid = 0;
};

/// Per-agent set of task units. Ids are (ledger owner << 32 | counter), so
/// records from different agents never collide.
class TaskLedger {
 public:
  explicit TaskLedger(int owner_agent = 0) : owner_agent_(owner_agent) {}

  const std::map<std::uint64_t, TaskUnit>& units() const { return units_; }
  TaskUnit* find(std::uint64_t id);
  const TaskUnit* find(std::uint64_t id) const;
  std::optional<std::uint64_t> unit_of_vertex(std::uint32_t v) const;
  std::vector<std::uint64_t> pending() const;
  std::size_t pending_workload() const;
  int owner_agent() const { return owner_agent_; }

  std::uint64_t allocate_id() { return (std::uint64_t(owner_agent_) << 32) | next_++; }
  std::map<std::uint64_t, TaskUnit>& mutable_units() { return units_; }
  std::map<std::uint32_t, std::uint64_t>& vertex_index() { return by_vertex_; }
  std::map<std::uint32_t, std::uint64_t>& grid_index() { return by_grid_; }

 private:
  int owner_agent_;
  std::uint32_t next_ = 0;
  std::map<std::uint64_t, TaskUnit> units_;
  std::map<std::uint32_t, std::uint64_t> by_vertex_;
  std::map<std::uint32_t, std::uint64_t> by_grid_;
};

/// Brings the ledger in line with the graph's UNKNOWN vertices. Returns ids
/// that turned COMPLETED in this pass.
std::vector<std::uint64_t> derive_units(const ConnectivityGraph& graph, const VoxelMap& map,
                                        TaskLedger& ledger);

/// Marks PENDING units INVALID when their vertex's component holds no FREE
/// vertex. Returns the ids that changed.
std::vector<std::uint64_t> mark_invalid(const ConnectivityGraph& graph, TaskLedger& ledger);

/// One unit per grid anchored at the centroid of its unknown voxels; the
/// representation without connectivity. Returns ids that turned COMPLETED.
std::vector<std::uint64_t> derive_grid_units(const VoxelMap& map, const GridPartition& part,
                                             TaskLedger& ledger);

/// Frontier voxels with an UNKNOWN 6-neighbor inside the record's scope.
std::vector<std::uint32_t> unit_frontiers(const VoxelMap& map, const GridPartition& part,
                                          const UnitRecord& rec);

}  // namespace mrx
