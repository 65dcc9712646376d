#include "mrx/voxel_map.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mrx {

const char* to_string(CellState s) {
  switch (s) {
    case CellState::Unknown: return "unknown";
    case CellState::Free: return "free";
    case CellState::Occupied: return "occupied";
  }
  return "?";
}

VoxelMap::VoxelMap(const Vec3& origin, double resolution, const Index3& dims, CellState fill)
    : origin_(origin), resolution_(resolution), dims_(dims) {
  if (!(resolution > 0.0)) throw MapError("resolution must be positive");
  if ((dims.array() < 1).any()) throw MapError("dims must all be >= 1");
  const std::size_t n = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  cells_.assign(n, fill);
  frontier_.assign(n, 0);
}

void VoxelMap::set_frontier(std::uint32_t i, bool f) {
  if ((frontier_[i] != 0) == f) return;
  frontier_[i] = f ? 1 : 0;
  if (f) ++frontier_count_;
  else --frontier_count_;
}

std::vector<std::uint32_t> VoxelMap::frontiers() const {
  std::vector<std::uint32_t> out;
  out.reserve(frontier_count_);
  for (std::uint32_t i = 0; i < frontier_.size(); ++i)
    if (frontier_[i]) out.push_back(i);
  return out;
}

std::size_t VoxelMap::count(CellState s) const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), s));
}

bool VoxelMap::frontier_definition(std::uint32_t i) const {
  if (cells_[i] != CellState::Free) return false;
  bool any = false;
  for_each_neighbor6(i, [&](std::uint32_t n) { any |= cells_[n] == CellState::Unknown; });
  return any;
}

void AgentState::record(const Vec3& p) {
  if (!path_log.empty()) distance_traveled += (p - path_log.back()).norm();
  path_log.push_back(p);
}

std::vector<Vec3> ray_directions(const RaySpec& spec) {
  constexpr double deg = std::numbers::pi / 180.0;
  const int n_az = std::max(1, static_cast<int>(std::lround(360.0 / spec.azimuth_step_deg)));
  const int n_el = std::max(1, static_cast<int>(std::lround(180.0 / spec.elevation_step_deg)));
  const double az_step = 360.0 / n_az, el_step = 180.0 / n_el;
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(n_az) * n_el);
  for (int e = 0; e < n_el; ++e) {
    const double el = (-90.0 + (e + 0.5) * el_step) * deg;
    for (int a = 0; a < n_az; ++a) {
      const double az = (a + 0.5) * az_step * deg;
      dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    }
  }
  return dirs;
}

MapDelta sense(const VoxelMap& truth, const VoxelMap& known, const AgentState& agent,
               double range, const RaySpec& rays, std::uint32_t tick) {
  const auto dirs = ray_directions(rays);
  return sense(truth, known, agent, range, dirs, tick);
}

MapDelta sense(const VoxelMap& truth, const VoxelMap& known, const AgentState& agent,
               double range, std::span<const Vec3> directions, std::uint32_t tick) {
  const Index3 v = truth.voxel_of(agent.position);
  if (!truth.in_bounds(v)) throw MapError("agent position outside map bounds");
  if (truth.state(v) == CellState::Occupied) throw MapError("agent inside an occupied voxel");

  // Observed states, collected in a scratch list so each voxel is reported once.
  std::vector<std::uint32_t> seen;
  seen.reserve(4096);
  thread_local std::vector<std::uint8_t> mark;
  if (mark.size() < truth.size()) mark.assign(truth.size(), 0);

  auto note = [&](std::uint32_t i) {
    if (!mark[i]) {
      mark[i] = 1;
      seen.push_back(i);
    }
  };
  for (const Vec3& d : directions) {
    traverse_ray(truth, agent.position, d, range, [&](std::uint32_t i, double) {
      note(i);
      return truth.state(i) != CellState::Occupied;
    });
  }
  note(truth.linear(v));

  MapDelta delta;
  delta.source = agent.id;
  delta.tick = tick;
  std::sort(seen.begin(), seen.end());
  for (std::uint32_t i : seen) {
    mark[i] = 0;
    if (known.state(i) == CellState::Unknown) delta.entries.push_back({i, truth.state(i)});
  }
  return delta;
}

std::vector<std::uint32_t> merge_deltas(VoxelMap& map, const MapDelta& delta) {
  for (const auto& e : delta.entries)
    if (e.index >= map.size()) throw MapError("delta index out of bounds");
  std::vector<std::uint32_t> changed;
  changed.reserve(delta.entries.size());
  for (const auto& e : delta.entries) {
    if (e.state == CellState::Unknown) continue;
    const CellState cur = map.state(e.index);
    if (cur == CellState::Unknown ||
        (cur == CellState::Free && e.state == CellState::Occupied)) {
      map.set_state(e.index, e.state);
      changed.push_back(e.index);
    }
  }
  return changed;
}

MapDelta diff(const VoxelMap& from, const VoxelMap& to, int source, std::uint32_t tick) {
  if (from.dims() != to.dims()) throw MapError("diff between maps of different shape");
  MapDelta d;
  d.source = source;
  d.tick = tick;
  const auto& a = from.cells();
  const auto& b = to.cells();
  for (std::uint32_t i = 0; i < a.size(); ++i)
    if (a[i] != CellState::Unknown && a[i] != b[i]) d.entries.push_back({i, a[i]});
  return d;
}

std::vector<std::uint32_t> update_frontiers(VoxelMap& map,
                                            std::span<const std::uint32_t> changed) {
  for (std::uint32_t i : changed) {
    map.set_frontier(i, map.frontier_definition(i));
    map.for_each_neighbor6(i, [&](std::uint32_t n) { map.set_frontier(n, map.frontier_definition(n)); });
  }
  return map.frontiers();
}

void recompute_frontiers(VoxelMap& map) {
  for (std::uint32_t i = 0; i < map.size(); ++i) map.set_frontier(i, map.frontier_definition(i));
}

// ---------------------------------------------------------------------------

VoxelMap load_text_map(std::istream& in) {
  double resolution = 0.5;
  Vec3 origin = Vec3::Zero();
  std::vector<std::vector<std::string>> slices(1);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "resolution") {
      if (!(ls >> resolution)) throw MapError("bad resolution line");
      continue;
    }
    if (head == "origin") {
      if (!(ls >> origin.x() >> origin.y() >> origin.z())) throw MapError("bad origin line");
      continue;
    }
    if (head.empty() || head[0] == ';') {
      if (!slices.back().empty()) slices.emplace_back();
      continue;
    }
    if (line.find_first_not_of("#.") != std::string::npos)
      throw MapError("unexpected character in map row: " + line);
    slices.back().push_back(line);
  }
  if (slices.back().empty()) slices.pop_back();
  if (slices.empty()) throw MapError("map has no slices");
  const int ny = static_cast<int>(slices[0].size());
  const int nx = static_cast<int>(slices[0][0].size());
  for (const auto& s : slices) {
    if (static_cast<int>(s.size()) != ny) throw MapError("slices differ in row count");
    for (const auto& r : s)
      if (static_cast<int>(r.size()) != nx) throw MapError("rows differ in length");
  }
  VoxelMap map(origin, resolution, Index3(nx, ny, static_cast<int>(slices.size())),
               CellState::Free);
  for (int z = 0; z < map.dims().z(); ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        if (slices[z][y][x] == '#') map.set_state(map.linear({x, y, z}), CellState::Occupied);
  return map;
}

VoxelMap load_text_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MapError("cannot open map file: " + path);
  return load_text_map(in);
}

void save_text_map(std::ostream& out, const VoxelMap& map) {
  out << "resolution " << map.resolution() << "\n";
  out << "origin " << map.origin().x() << ' ' << map.origin().y() << ' ' << map.origin().z()
      << "\n";
  for (int z = 0; z < map.dims().z(); ++z) {
    if (z > 0) out << "\n";
    for (int y = 0; y < map.dims().y(); ++y) {
      for (int x = 0; x < map.dims().x(); ++x)
        out << (map.state(Index3(x, y, z)) == CellState::Occupied ? '#' : '.');
      out << "\n";
    }
  }
}

}  // namespace mrx
