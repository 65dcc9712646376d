#include "mrx/task_registry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace mrx {

const char* to_string(UnitStatus s) {
  switch (s) {
    case UnitStatus::Pending: return "pending";
    case UnitStatus::Completed: return "completed";
    case UnitStatus::Invalid: return "invalid";
  }
  return "?";
}

void UnitRecord::encode(ByteWriter& w) const {
  w.u64(id);
  w.f64(anchor.x());
  w.f64(anchor.y());
  w.f64(anchor.z());
  if (grid) {
    w.u8(0);
    w.u32(*grid);
  } else {
    w.u8(1);
    w.f64(zmin);
    w.f64(zmax);
    w.u32(static_cast<std::uint32_t>(hull.size()));
    for (const Vec2& p : hull) {
      w.f64(p.x());
      w.f64(p.y());
    }
  }
  w.u32(num);
  w.i32(owner);
  w.u8(static_cast<std::uint8_t>(status));
}

UnitRecord UnitRecord::decode(ByteReader& r) {
  UnitRecord u;
  u.id = r.u64();
  u.anchor.x() = r.f64();
  u.anchor.y() = r.f64();
  u.anchor.z() = r.f64();
  const std::uint8_t tag = r.u8();
  if (tag == 0) {
    u.grid = r.u32();
  } else if (tag == 1) {
    u.zmin = r.f64();
    u.zmax = r.f64();
    const std::uint32_t n = r.u32();
    if (n > r.remaining() / 16) throw DecodeError("hull length exceeds payload");
    u.hull.resize(n);
    for (auto& p : u.hull) {
      p.x() = r.f64();
      p.y() = r.f64();
    }
  } else {
    throw DecodeError("bad unit descriptor tag");
  }
  u.num = r.u32();
  u.owner = r.i32();
  const std::uint8_t s = r.u8();
  if (s > 2) throw DecodeError("bad unit status");
  u.status = static_cast<UnitStatus>(s);
  return u;
}

bool UnitRecord::operator==(const UnitRecord& o) const {
  return id == o.id && anchor == o.anchor && grid == o.grid && hull == o.hull &&
         zmin == o.zmin && zmax == o.zmax && num == o.num && owner == o.owner &&
         status == o.status;
}

// ---------------------------------------------------------------------------

UnitScope::UnitScope(const VoxelMap& map, const GridPartition& part, const UnitRecord& rec)
    : map_(&map), part_(&part), rec_(&rec) {
  if (rec.grid) {
    if (*rec.grid < part.size()) candidates_ = part.voxels(map, *rec.grid);
    return;
  }
  if (rec.hull.empty()) return;
  Vec2 lo = rec.hull[0], hi = rec.hull[0];
  for (const Vec2& p : rec.hull) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Index3 a = map.voxel_of(Vec3(lo.x(), lo.y(), rec.zmin)).cwiseMax(Index3::Zero());
  const Index3 b = map.voxel_of(Vec3(hi.x(), hi.y(), rec.zmax))
                       .cwiseMin((map.dims().array() - 1).matrix());
  for (int z = a.z(); z <= b.z(); ++z)
    for (int y = a.y(); y <= b.y(); ++y)
      for (int x = a.x(); x <= b.x(); ++x) candidates_.push_back(map.linear({x, y, z}));
}

bool UnitScope::contains(std::uint32_t voxel) const {
  if (rec_->grid) return part_->grid_of(voxel) == *rec_->grid;
  const Vec3 c = map_->center(voxel);
  if (c.z() < rec_->zmin || c.z() > rec_->zmax) return false;
  return hull_contains(rec_->hull, Vec2(c.x(), c.y()), 1e-6);
}

std::vector<std::uint32_t> unit_frontiers(const VoxelMap& map, const GridPartition& part,
                                          const UnitRecord& rec) {
  const UnitScope scope(map, part, rec);
  std::vector<std::uint32_t> out;
  for (std::uint32_t c : scope.candidates()) {
    if (map.state(c) != CellState::Unknown || !scope.contains(c)) continue;
    map.for_each_neighbor6(c, [&](std::uint32_t n) {
      if (map.is_frontier(n)) out.push_back(n);
    });
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------

TaskUnit* TaskLedger::find(std::uint64_t id) {
  auto it = units_.find(id);
  return it == units_.end() ? nullptr : &it->second;
}

const TaskUnit* TaskLedger::find(std::uint64_t id) const {
  auto it = units_.find(id);
  return it == units_.end() ? nullptr : &it->second;
}

std::optional<std::uint64_t> TaskLedger::unit_of_vertex(std::uint32_t v) const {
  auto it = by_vertex_.find(v);
  if (it == by_vertex_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint64_t> TaskLedger::pending() const {
  std::vector<std::uint64_t> out;
  for (const auto& [id, u] : units_)
    if (u.rec.status == UnitStatus::Pending) out.push_back(id);
  return out;
}

std::size_t TaskLedger::pending_workload() const {
  std::size_t w = 0;
  for (const auto& [id, u] : units_)
    if (u.rec.status == UnitStatus::Pending) w += u.rec.num;
  return w;
}

namespace {

void grid_z_band(const VoxelMap& map, const GridPartition& part, std::uint32_t g, double& zmin,
                 double& zmax) {
  zmin = map.origin().z() + part.lo(g).z() * map.resolution();
  zmax = map.origin().z() + part.hi(g).z() * map.resolution();
}

void complete(TaskUnit& u) {
  u.rec.status = UnitStatus::Completed;
  u.members.clear();
  u.vertex = -1;
}

}  // namespace

std::vector<std::uint64_t> derive_units(const ConnectivityGraph& graph, const VoxelMap& map,
                                        TaskLedger& ledger) {
  auto& units = ledger.mutable_units();
  const auto& part = graph.partition();

  // Overlap between each live unit's previous voxels and the new regions.
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint32_t> overlap;
  for (const auto& [id, u] : units) {
    if (u.rec.status == UnitStatus::Completed) continue;
    for (std::uint32_t m : u.members) {
      if (map.state(m) != CellState::Unknown) continue;
      const std::int32_t v = graph.vertex_at(m);
      if (v >= 0) ++overlap[{id, static_cast<std::uint32_t>(v)}];
    }
  }
  std::vector<std::tuple<std::uint32_t, std::uint64_t, std::uint32_t>> cand;
  cand.reserve(overlap.size());
  for (const auto& [key, n] : overlap) cand.emplace_back(n, key.first, key.second);
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  std::map<std::uint32_t, std::uint64_t> vertex_to_unit;
  std::map<std::uint64_t, std::uint32_t> unit_to_vertex;
  for (const auto& [n, id, v] : cand) {
    if (vertex_to_unit.count(v) || unit_to_vertex.count(id)) continue;
    vertex_to_unit[v] = id;
    unit_to_vertex[id] = v;
  }

  std::vector<std::uint32_t> unknown_per_grid(part.size(), 0);
  std::vector<std::uint32_t> unknown_vertices;
  for (std::uint32_t v : graph.vertex_ids())
    if (graph.vertex(v).kind == RegionKind::Unknown) {
      unknown_vertices.push_back(v);
      ++unknown_per_grid[graph.vertex(v).grid];
    }

  auto fill = [&](TaskUnit& u, std::uint32_t v) {
    const RegionVertex& r = graph.vertex(v);
    u.rec.anchor = r.anchor;
    u.rec.num = static_cast<std::uint32_t>(r.members.size());
    u.members = r.members;
    u.vertex = static_cast<std::int32_t>(v);
    u.home_grid = r.grid;
    if (unknown_per_grid[r.grid] > 1) {
      std::vector<Vec2> pts;
      pts.reserve(r.members.size());
      for (std::uint32_t m : r.members) {
        const Vec3 c = map.center(m);
        pts.emplace_back(c.x(), c.y());
      }
      u.rec.grid.reset();
      u.rec.hull = convex_hull(std::move(pts));
      grid_z_band(map, part, r.grid, u.rec.zmin, u.rec.zmax);
    } else {
      u.rec.grid = r.grid;
      u.rec.hull.clear();
      u.rec.zmin = u.rec.zmax = 0.0;
    }
  };

  auto& by_vertex = ledger.vertex_index();
  by_vertex.clear();
  std::vector<std::uint64_t> completed;
  for (auto& [id, u] : units) {
    if (u.rec.status == UnitStatus::Completed) continue;
    auto it = unit_to_vertex.find(id);
    if (it == unit_to_vertex.end()) {
      if (u.rec.status == UnitStatus::Pending) completed.push_back(id);
      complete(u);
      continue;
    }
    fill(u, it->second);
    by_vertex[it->second] = id;
  }
  for (std::uint32_t v : unknown_vertices) {
    if (vertex_to_unit.count(v)) continue;
    TaskUnit u;
    u.rec.id = ledger.allocate_id();
    fill(u, v);
    by_vertex[v] = u.rec.id;
    units.emplace(u.rec.id, std::move(u));
  }
  return completed;
}

std::vector<std::uint64_t> mark_invalid(const ConnectivityGraph& graph, TaskLedger& ledger) {
  // Component labels over the whole graph, then one flag per component.
  std::vector<std::int32_t> comp(graph.capacity(), -1);
  std::vector<std::uint8_t> has_free;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s : graph.vertex_ids()) {
    if (comp[s] >= 0) continue;
    const auto c = static_cast<std::int32_t>(has_free.size());
    has_free.push_back(0);
    comp[s] = c;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::uint32_t u = stack.back();
      stack.pop_back();
      if (graph.vertex(u).kind == RegionKind::Free) has_free[c] = 1;
      for (const GraphEdge& e : graph.edges(u))
        if (comp[e.to] < 0) {
          comp[e.to] = c;
          stack.push_back(e.to);
        }
    }
  }
  std::vector<std::uint64_t> out;
  for (auto& [id, u] : ledger.mutable_units()) {
    if (u.rec.status != UnitStatus::Pending || u.vertex < 0) continue;
    if (!has_free[comp[u.vertex]]) {
      u.rec.status = UnitStatus::Invalid;
      out.push_back(id);
    }
  }
  return out;
}

std::vector<std::uint64_t> derive_grid_units(const VoxelMap& map, const GridPartition& part,
                                             TaskLedger& ledger) {
  auto& units = ledger.mutable_units();
  auto& by_grid = ledger.grid_index();
  std::vector<std::uint64_t> completed;
  for (std::uint32_t g = 0; g < part.size(); ++g) {
    std::vector<std::uint32_t> unknown;
    Vec3 sum = Vec3::Zero();
    for (std::uint32_t i : part.voxels(map, g))
      if (map.state(i) == CellState::Unknown) {
        unknown.push_back(i);
        sum += map.center(i);
      }
    auto it = by_grid.find(g);
    if (unknown.empty()) {
      if (it != by_grid.end()) {
        TaskUnit& u = units.at(it->second);
        if (u.rec.status == UnitStatus::Pending) {
          complete(u);
          completed.push_back(u.rec.id);
        }
      }
      continue;
    }
    TaskUnit* u;
    if (it == by_grid.end()) {
      TaskUnit fresh;
      fresh.rec.id = ledger.allocate_id();
      fresh.rec.grid = g;
      fresh.home_grid = g;
      by_grid[g] = fresh.rec.id;
      u = &units.emplace(fresh.rec.id, std::move(fresh)).first->second;
    } else {
      u = &units.at(it->second);
    }
    u->rec.anchor = sum / static_cast<double>(unknown.size());
    u->rec.num = static_cast<std::uint32_t>(unknown.size());
    u->members = std::move(unknown);
  }
  return completed;
}

}  // namespace mrx
