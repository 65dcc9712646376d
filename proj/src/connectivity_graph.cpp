#include "mrx/connectivity_graph.hpp"

#include "mrx/search.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <queue>
#include <set>

namespace mrx {

GridPartition::GridPartition(const VoxelMap& map, double grid_edge)
    : grid_edge_(grid_edge), vdims_(map.dims()) {
  if (!(grid_edge > 0.0)) throw GraphError("grid edge must be positive");
  cells_ = std::max(1, static_cast<int>(std::lround(grid_edge / map.resolution())));
  for (int a = 0; a < 3; ++a) gdims_[a] = (vdims_[a] + cells_ - 1) / cells_;
  lookup_.resize(map.size());
  for (std::uint32_t i = 0; i < map.size(); ++i) lookup_[i] = grid_of(map.unravel(i));
}

std::vector<std::uint32_t> GridPartition::voxels(const VoxelMap& map, std::uint32_t g) const {
  const Index3 a = lo(g), b = hi(g);
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>((b - a).prod()));
  for (int z = a.z(); z < b.z(); ++z)
    for (int y = a.y(); y < b.y(); ++y)
      for (int x = a.x(); x < b.x(); ++x) out.push_back(map.linear({x, y, z}));
  return out;
}

std::vector<std::uint32_t> GridPartition::neighbors(std::uint32_t g) const {
  const Index3 c = coord(g);
  std::vector<std::uint32_t> out;
  for (int a = 2; a >= 0; --a) {
    Index3 n = c;
    n[a] -= 1;
    if (n[a] >= 0) out.push_back(linear(n));
  }
  for (int a = 0; a < 3; ++a) {
    Index3 n = c;
    n[a] += 1;
    if (n[a] < gdims_[a]) out.push_back(linear(n));
  }
  std::sort(out.begin(), out.end());
  return out;
}

const char* to_string(RegionKind k) { return k == RegionKind::Free ? "free" : "unknown"; }

const char* to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::Free: return "free";
    case EdgeKind::Unknown: return "unknown";
    case EdgeKind::Portal: return "portal";
    case EdgeKind::Boundary: return "boundary";
  }
  return "?";
}

std::vector<RegionVertex> segment_grid(const VoxelMap& map, const GridPartition& part,
                                       std::uint32_t grid) {
  if (grid >= part.size()) throw GraphError("grid id out of range");
  const auto cells = part.voxels(map, grid);
  std::vector<RegionVertex> out;
  // Labels live in a scratch array indexed by voxel; only this grid's
  // entries are touched and they are reset before returning.
  thread_local std::vector<std::uint8_t> seen;
  if (seen.size() < map.size()) seen.assign(map.size(), 0);
  std::vector<std::uint32_t> stack;
  for (std::uint32_t seed : cells) {
    const CellState s = map.state(seed);
    if (s == CellState::Occupied || seen[seed]) continue;
    RegionVertex r;
    r.kind = s == CellState::Free ? RegionKind::Free : RegionKind::Unknown;
    r.grid = grid;
    seen[seed] = 1;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::uint32_t i = stack.back();
      stack.pop_back();
      r.members.push_back(i);
      map.for_each_neighbor6(i, [&](std::uint32_t n) {
        if (!seen[n] && map.state(n) == s && part.grid_of(n) == grid) {
          seen[n] = 1;
          stack.push_back(n);
        }
      });
    }
    std::sort(r.members.begin(), r.members.end());
    Vec3 sum = Vec3::Zero();
    for (std::uint32_t m : r.members) sum += map.center(m);
    r.anchor = sum / static_cast<double>(r.members.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t m : r.members) {
      const double d = (map.center(m) - r.anchor).squaredNorm();
      if (d < best) {
        best = d;
        r.snap = m;
      }
    }
    out.push_back(std::move(r));
  }
  for (std::uint32_t i : cells) seen[i] = 0;
  return out;
}

std::vector<std::uint32_t> dirty_grids(const GridPartition& part,
                                       std::span<const std::uint32_t> voxels) {
  std::vector<std::uint32_t> out;
  out.reserve(voxels.size());
  for (std::uint32_t v : voxels) out.push_back(part.grid_of(v));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------

ConnectivityGraph::ConnectivityGraph(const VoxelMap& map, double grid_edge)
    : part_(map, grid_edge) {
  rebuild(map);
}

const RegionVertex& ConnectivityGraph::vertex(std::uint32_t v) const {
  check(v);
  return *vertices_[v];
}

const std::vector<GraphEdge>& ConnectivityGraph::edges(std::uint32_t v) const {
  check(v);
  return adj_[v];
}

void ConnectivityGraph::check(std::uint32_t v) const {
  if (!alive(v)) throw GraphError("unknown vertex id " + std::to_string(v));
}

std::vector<std::uint32_t> ConnectivityGraph::vertex_ids() const {
  std::vector<std::uint32_t> out;
  out.reserve(live_);
  for (std::uint32_t v = 0; v < vertices_.size(); ++v)
    if (vertices_[v]) out.push_back(v);
  return out;
}

std::vector<EdgeRecord> ConnectivityGraph::edge_list() const {
  std::vector<EdgeRecord> out;
  for (std::uint32_t u = 0; u < adj_.size(); ++u)
    for (const GraphEdge& e : adj_[u])
      if (u < e.to) out.push_back({u, e.to, e.kind, e.length});
  std::sort(out.begin(), out.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
    return std::tie(a.u, a.v, a.kind) < std::tie(b.u, b.v, b.kind);
  });
  return out;
}

void ConnectivityGraph::clear_grid(std::uint32_t g) {
  for (std::uint32_t v : by_grid_[g]) {
    for (const GraphEdge& e : adj_[v]) {
      auto& back = adj_[e.to];
      back.erase(std::remove_if(back.begin(), back.end(),
                                [&](const GraphEdge& b) { return b.to == v; }),
                 back.end());
    }
    adj_[v].clear();
    for (std::uint32_t m : vertices_[v]->members) owner_[m] = -1;
    vertices_[v].reset();
    free_ids_.push_back(v);
    --live_;
  }
  by_grid_[g].clear();
}

void ConnectivityGraph::insert_region(RegionVertex r) {
  std::uint32_t id;
  if (!free_ids_.empty()) {
    // Smallest released id first, so id assignment does not depend on
    // the order grids were cleared in.
    auto it = std::min_element(free_ids_.begin(), free_ids_.end());
    id = *it;
    free_ids_.erase(it);
  } else {
    id = static_cast<std::uint32_t>(vertices_.size());
    vertices_.emplace_back();
    adj_.emplace_back();
  }
  for (std::uint32_t m : r.members) owner_[m] = static_cast<std::int32_t>(id);
  by_grid_[r.grid].push_back(id);
  vertices_[id] = std::move(r);
  ++live_;
}

namespace {

// Shortest voxel paths from one source snap to several target snaps, all
// inside the voxels accepted by `passable`.
template <typename Passable>
std::vector<double> snap_distances(const VoxelMap& map, std::uint32_t source,
                                   const std::vector<std::uint32_t>& targets, Passable&& passable) {
  std::vector<double> out(targets.size(), kUnreachable);
  std::size_t left = targets.size();
  if (left == 0) return out;
  voxel_dijkstra(map, source, passable, kUnreachable, [&](std::uint32_t i, double d) {
    for (std::size_t t = 0; t < targets.size(); ++t)
      if (targets[t] == i && out[t] == kUnreachable) {
        out[t] = d;
        --left;
      }
    return left > 0;
  });
  return out;
}

}  // namespace

void ConnectivityGraph::link_grid_pair(const VoxelMap& map, std::uint32_t ga, std::uint32_t gb) {
  if (ga > gb) std::swap(ga, gb);
  auto add = [&](std::uint32_t a, std::uint32_t b, EdgeKind kind, double path) {
    const RegionVertex& ra = *vertices_[a];
    const RegionVertex& rb = *vertices_[b];
    const double len = (ra.anchor - map.center(ra.snap)).norm() + path +
                       (map.center(rb.snap) - rb.anchor).norm();
    adj_[a].push_back({b, kind, len});
    adj_[b].push_back({a, kind, len});
  };

  // Regions touching across the shared face. Regions are maximal within a
  // grid, so two same-kind regions are joined inside ga+gb exactly when a
  // chain of face contacts links them.
  const Index3 ca = part_.coord(ga), cb = part_.coord(gb);
  int axis = 0;
  while (ca[axis] == cb[axis]) ++axis;
  const Index3& dims = map.dims();
  const int step = axis == 0 ? 1 : axis == 1 ? dims.x() : dims.x() * dims.y();
  std::set<std::pair<std::uint32_t, std::uint32_t>> touching;
  for (std::uint32_t a : by_grid_[ga])
    for (std::uint32_t m : vertices_[a]->members) {
      if (map.unravel(m)[axis] + 1 >= dims[axis]) continue;
      const std::uint32_t n = m + static_cast<std::uint32_t>(step);
      if (part_.grid_of(n) != gb || owner_[n] < 0) continue;
      touching.emplace(a, static_cast<std::uint32_t>(owner_[n]));
    }

  std::map<std::uint32_t, std::uint32_t> comp;
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t x) {
    auto it = comp.find(x);
    if (it == comp.end()) return comp[x] = x;
    return it->second == x ? x : it->second = find(it->second);
  };
  for (auto [a, b] : touching)
    if (vertices_[a]->kind == vertices_[b]->kind) comp[find(a)] = find(b);

  // Same-state edges: search over matching voxels of both grids.
  for (RegionKind kind : {RegionKind::Free, RegionKind::Unknown}) {
    const CellState want = kind == RegionKind::Free ? CellState::Free : CellState::Unknown;
    auto passable = [&](std::uint32_t i) {
      if (map.state(i) != want) return false;
      const std::uint32_t g = part_.grid_of(i);
      return g == ga || g == gb;
    };
    for (std::uint32_t a : by_grid_[ga]) {
      if (vertices_[a]->kind != kind) continue;
      std::vector<std::uint32_t> targets, target_ids;
      for (std::uint32_t b : by_grid_[gb])
        if (vertices_[b]->kind == kind && find(a) == find(b)) {
          targets.push_back(vertices_[b]->snap);
          target_ids.push_back(b);
        }
      if (targets.empty()) continue;
      const auto d = snap_distances(map, vertices_[a]->snap, targets, passable);
      for (std::size_t t = 0; t < d.size(); ++t)
        if (d[t] != kUnreachable)
          add(a, target_ids[t], kind == RegionKind::Free ? EdgeKind::Free : EdgeKind::Unknown, d[t]);
    }
  }

  // Boundary edges: a FREE region touching an UNKNOWN region across the face.
  for (auto [a, b] : touching) {
    if (vertices_[a]->kind == vertices_[b]->kind) continue;
    const std::uint32_t f = vertices_[a]->kind == RegionKind::Free ? a : b;
    const std::uint32_t u = f == a ? b : a;
    const auto fi = static_cast<std::int32_t>(f), ui = static_cast<std::int32_t>(u);
    auto passable = [&](std::uint32_t i) { return owner_[i] == fi || owner_[i] == ui; };
    const auto d = snap_distances(map, vertices_[f]->snap, {vertices_[u]->snap}, passable);
    if (d[0] != kUnreachable) add(f, u, EdgeKind::Boundary, d[0]);
  }
}

void ConnectivityGraph::link_within(const VoxelMap& map, std::uint32_t g) {
  std::vector<std::uint32_t> targets, target_ids;
  for (std::uint32_t u : by_grid_[g])
    if (vertices_[u]->kind == RegionKind::Unknown) {
      targets.push_back(vertices_[u]->snap);
      target_ids.push_back(u);
    }
  if (targets.empty()) return;
  auto passable = [&](std::uint32_t i) {
    return map.state(i) != CellState::Occupied && part_.grid_of(i) == g;
  };
  for (std::uint32_t f : by_grid_[g]) {
    if (vertices_[f]->kind != RegionKind::Free) continue;
    const auto d = snap_distances(map, vertices_[f]->snap, targets, passable);
    const RegionVertex& rf = *vertices_[f];
    for (std::size_t t = 0; t < d.size(); ++t) {
      if (d[t] == kUnreachable) continue;
      const RegionVertex& ru = *vertices_[target_ids[t]];
      const double len = (rf.anchor - map.center(rf.snap)).norm() + d[t] +
                         (map.center(ru.snap) - ru.anchor).norm();
      adj_[f].push_back({target_ids[t], EdgeKind::Portal, len});
      adj_[target_ids[t]].push_back({f, EdgeKind::Portal, len});
    }
  }
}

void ConnectivityGraph::rebuild(const VoxelMap& map) {
  part_ = GridPartition(map, part_.grid_edge());
  vertices_.clear();
  adj_.clear();
  free_ids_.clear();
  by_grid_.assign(part_.size(), {});
  owner_.assign(map.size(), -1);
  live_ = 0;
  std::vector<std::uint32_t> all(part_.size());
  for (std::uint32_t g = 0; g < all.size(); ++g) all[g] = g;
  update(map, all);
}

void ConnectivityGraph::update(const VoxelMap& map, std::span<const std::uint32_t> dirty) {
  if (dirty.empty()) return;
  if (owner_.size() != map.size()) throw GraphError("map shape does not match graph");
  std::vector<std::uint32_t> grids(dirty.begin(), dirty.end());
  std::sort(grids.begin(), grids.end());
  grids.erase(std::unique(grids.begin(), grids.end()), grids.end());
  for (std::uint32_t g : grids) {
    if (g >= part_.size()) throw GraphError("dirty grid id out of range");
    clear_grid(g);
  }
  for (std::uint32_t g : grids)
    for (RegionVertex& r : segment_grid(map, part_, g)) insert_region(std::move(r));

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t g : grids)
    for (std::uint32_t n : part_.neighbors(g)) pairs.emplace_back(std::min(g, n), std::max(g, n));
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  for (std::uint32_t g : grids) link_within(map, g);
  for (auto [a, b] : pairs) link_grid_pair(map, a, b);
}

std::optional<std::uint32_t> ConnectivityGraph::nearest_vertex(const VoxelMap& map,
                                                               const Vec3& p) const {
  const Index3 v = map.voxel_of(p);
  if (map.in_bounds(v) && owner_[map.linear(v)] >= 0)
    return static_cast<std::uint32_t>(owner_[map.linear(v)]);
  std::optional<std::uint32_t> best;
  double best_d = kUnreachable;
  for (std::uint32_t i = 0; i < vertices_.size(); ++i) {
    if (!vertices_[i]) continue;
    const double d = (vertices_[i]->anchor - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

PathTree ConnectivityGraph::shortest_paths(std::uint32_t source) const {
  check(source);
  PathTree t;
  t.dist.assign(vertices_.size(), kUnreachable);
  t.parent.assign(vertices_.size(), -1);
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  t.dist[source] = 0.0;
  open.emplace(0.0, source);
  while (!open.empty()) {
    const auto [d, u] = open.top();
    open.pop();
    if (d > t.dist[u]) continue;
    for (const GraphEdge& e : adj_[u]) {
      const double c = d + e.length;
      if (c < t.dist[e.to]) {
        t.dist[e.to] = c;
        t.parent[e.to] = static_cast<std::int32_t>(u);
        open.emplace(c, e.to);
      }
    }
  }
  return t;
}

double ConnectivityGraph::distance(std::uint32_t a, std::uint32_t b) const {
  check(a);
  check(b);
  if (a == b) return 0.0;
  // A* over anchors; straight-line anchor distance is admissible because
  // every edge is at least as long as the segment between its anchors.
  std::vector<double> g(vertices_.size(), kUnreachable);
  std::vector<std::uint8_t> closed(vertices_.size(), 0);
  const Vec3 goal = vertices_[b]->anchor;
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[a] = 0.0;
  open.emplace((vertices_[a]->anchor - goal).norm(), a);
  while (!open.empty()) {
    const std::uint32_t u = open.top().second;
    open.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    if (u == b) return g[b];
    for (const GraphEdge& e : adj_[u]) {
      const double c = g[u] + e.length;
      if (c < g[e.to]) {
        g[e.to] = c;
        open.emplace(c + (vertices_[e.to]->anchor - goal).norm(), e.to);
      }
    }
  }
  return kUnreachable;
}

std::vector<std::uint32_t> ConnectivityGraph::path(const PathTree& tree,
                                                   std::uint32_t target) const {
  std::vector<std::uint32_t> out;
  if (target >= tree.dist.size() || tree.dist[target] == kUnreachable) return out;
  for (std::int32_t c = static_cast<std::int32_t>(target); c >= 0; c = tree.parent[c])
    out.push_back(static_cast<std::uint32_t>(c));
  std::reverse(out.begin(), out.end());
  return out;
}

void ConnectivityGraph::dump(std::ostream& out) const {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::fixed << std::setprecision(6);
  out << "vertices " << live_ << "\n";
  for (std::uint32_t v = 0; v < vertices_.size(); ++v) {
    if (!vertices_[v]) continue;
    const RegionVertex& r = *vertices_[v];
    out << "v " << v << ' ' << to_string(r.kind) << ' ' << r.grid << ' ' << r.anchor.x() << ' '
        << r.anchor.y() << ' ' << r.anchor.z() << ' ' << r.members.size() << "\n";
  }
  const auto edges = edge_list();
  out << "edges " << edges.size() << "\n";
  for (const EdgeRecord& e : edges)
    out << "e " << e.u << ' ' << e.v << ' ' << to_string(e.kind) << ' ' << e.length << "\n";
  out.flags(flags);
  out.precision(prec);
}

}  // namespace mrx
