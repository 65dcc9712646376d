#pragma once

#include "mrx/voxel_map.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

namespace mrx {

// Voxel moves: 26-neighborhood, but a diagonal move is legal only when every
// voxel of the box it sweeps is passable. Reachability therefore matches
// 6-connectivity while lengths approach Euclidean.
namespace detail {

struct Move {
  int dx, dy, dz;
  double unit_cost;
  int required_count;
  std::array<int, 7> required;  // indices into the 27-block, target included
};

inline int block_index(int dx, int dy, int dz) { return (dx + 1) + 3 * ((dy + 1) + 3 * (dz + 1)); }

inline const std::vector<Move>& moves26() {
  static const std::vector<Move> moves = [] {
    std::vector<Move> out;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int k = (dx != 0) + (dy != 0) + (dz != 0);
          if (k == 0) continue;
          Move m{dx, dy, dz, std::sqrt(static_cast<double>(k)), 0, {}};
          for (int sz = 0; sz <= (dz != 0); ++sz)
            for (int sy = 0; sy <= (dy != 0); ++sy)
              for (int sx = 0; sx <= (dx != 0); ++sx) {
                if (sx + sy + sz == 0) continue;
                m.required[m.required_count++] = block_index(sx * dx, sy * dy, sz * dz);
              }
          out.push_back(m);
        }
    return out;
  }();
  return moves;
}

struct Workspace {
  std::vector<double> g;
  std::vector<std::uint32_t> parent;
  std::vector<std::uint32_t> seen;
  std::vector<std::uint32_t> closed;
  std::uint32_t gen = 0;

  void prepare(std::size_t n) {
    if (g.size() < n) {
      g.assign(n, 0.0);
      parent.assign(n, 0);
      seen.assign(n, 0);
      closed.assign(n, 0);
      gen = 0;
    }
    if (++gen == 0) {
      std::fill(seen.begin(), seen.end(), 0);
      std::fill(closed.begin(), closed.end(), 0);
      gen = 1;
    }
  }
  bool visited(std::uint32_t i) const { return seen[i] == gen; }
  bool is_closed(std::uint32_t i) const { return closed[i] == gen; }
};

inline Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

/// Calls relax(neighbor, step_length) for every legal move out of voxel i.
template <typename Passable, typename Relax>
inline void expand(const VoxelMap& map, std::uint32_t i, Passable& passable, Relax&& relax) {
  const Index3 v = map.unravel(i);
  const Index3& d = map.dims();
  const int nx = d.x(), nxy = d.x() * d.y();
  std::array<std::int8_t, 27> ok;
  const bool interior = v.x() > 0 && v.y() > 0 && v.z() > 0 && v.x() + 1 < d.x() &&
                        v.y() + 1 < d.y() && v.z() + 1 < d.z();
  if (interior) {
    int b = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++b)
          ok[b] = (b == 13) ? 1
                            : (passable(static_cast<std::uint32_t>(static_cast<int>(i) + dx + dy * nx +
                                                                   dz * nxy))
                                   ? 1
                                   : 0);
  } else
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int b = block_index(dx, dy, dz);
        if (dx == 0 && dy == 0 && dz == 0) {
          ok[b] = 1;
          continue;
        }
        const int x = v.x() + dx, y = v.y() + dy, z = v.z() + dz;
        if (x < 0 || y < 0 || z < 0 || x >= d.x() || y >= d.y() || z >= d.z()) {
          ok[b] = 0;
          continue;
        }
        ok[b] = passable(static_cast<std::uint32_t>(static_cast<int>(i) + dx + dy * nx + dz * nxy))
                    ? 1
                    : 0;
      }
  const double res = map.resolution();
  for (const Move& m : moves26()) {
    bool legal = true;
    for (int r = 0; r < m.required_count && legal; ++r) legal = ok[m.required[r]] != 0;
    if (!legal) continue;
    relax(static_cast<std::uint32_t>(static_cast<int>(i) + m.dx + m.dy * nx + m.dz * nxy),
          m.unit_cost * res);
  }
}

/// Exact free-space length under the move set (3D octile distance).
inline double octile(const Index3& a, const Index3& b, double res) {
  std::array<int, 3> d{std::abs(a.x() - b.x()), std::abs(a.y() - b.y()), std::abs(a.z() - b.z())};
  std::sort(d.begin(), d.end());
  return res * (d[0] * std::sqrt(3.0) + (d[1] - d[0]) * std::sqrt(2.0) + (d[2] - d[1]));
}

}  // namespace detail

/// Shortest path from start to goal over passable voxels (A*). Both endpoints
/// must satisfy `passable`. If `path` is given it receives the voxel sequence.
template <typename Passable>
std::optional<double> voxel_astar(const VoxelMap& map, std::uint32_t start, std::uint32_t goal,
                                  Passable&& passable, std::vector<std::uint32_t>* path = nullptr) {
  if (!passable(start) || !passable(goal)) return std::nullopt;
  if (start == goal) {
    if (path) *path = {start};
    return 0.0;
  }
  auto& ws = detail::workspace();
  ws.prepare(map.size());
  const Index3 gv = map.unravel(goal);
  const double res = map.resolution();
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  ws.seen[start] = ws.gen;
  ws.g[start] = 0.0;
  ws.parent[start] = start;
  open.emplace(detail::octile(map.unravel(start), gv, res), start);
  while (!open.empty()) {
    const auto [f, i] = open.top();
    open.pop();
    if (ws.is_closed(i)) continue;
    ws.closed[i] = ws.gen;
    if (i == goal) break;
    const double gi = ws.g[i];
    detail::expand(map, i, passable, [&](std::uint32_t n, double step) {
      if (ws.is_closed(n)) return;
      const double cand = gi + step;
      if (!ws.visited(n) || cand < ws.g[n]) {
        ws.seen[n] = ws.gen;
        ws.g[n] = cand;
        ws.parent[n] = i;
        open.emplace(cand + detail::octile(map.unravel(n), gv, res), n);
      }
    });
  }
  if (!ws.is_closed(goal)) return std::nullopt;
  if (path) {
    path->clear();
    for (std::uint32_t c = goal;; c = ws.parent[c]) {
      path->push_back(c);
      if (c == start) break;
    }
    std::reverse(path->begin(), path->end());
  }
  return ws.g[goal];
}

/// Single-source Dijkstra. Calls on_settle(index, distance) in settle order;
/// returning false stops the search. Expansion stops beyond max_cost.
template <typename Passable, typename OnSettle>
void voxel_dijkstra(const VoxelMap& map, std::uint32_t start, Passable&& passable, double max_cost,
                    OnSettle&& on_settle) {
  if (!passable(start)) return;
  auto& ws = detail::workspace();
  ws.prepare(map.size());
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  ws.seen[start] = ws.gen;
  ws.g[start] = 0.0;
  open.emplace(0.0, start);
  while (!open.empty()) {
    const auto [gi, i] = open.top();
    open.pop();
    if (ws.is_closed(i)) continue;
    ws.closed[i] = ws.gen;
    if (!on_settle(i, gi)) return;
    detail::expand(map, i, passable, [&](std::uint32_t n, double step) {
      if (ws.is_closed(n)) return;
      const double cand = gi + step;
      if (cand > max_cost) return;
      if (!ws.visited(n) || cand < ws.g[n]) {
        ws.seen[n] = ws.gen;
        ws.g[n] = cand;
        open.emplace(cand, n);
      }
    });
  }
}

}  // namespace mrx
