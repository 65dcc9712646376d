#include "mrx/scenes.hpp"

#include "mrx/rng.hpp"

#include <algorithm>

namespace mrx {

std::optional<SceneKind> parse_scene_kind(const std::string& name) {
  if (name == "cubicle") return SceneKind::Cubicle;
  if (name == "open_plan" || name == "open-plan") return SceneKind::OpenPlan;
  if (name == "maze") return SceneKind::Maze;
  return std::nullopt;
}

const char* to_string(SceneKind k) {
  switch (k) {
    case SceneKind::Cubicle: return "cubicle";
    case SceneKind::OpenPlan: return "open_plan";
    case SceneKind::Maze: return "maze";
  }
  return "?";
}

namespace {

class Builder {
 public:
  explicit Builder(VoxelMap& m) : m_(m) {}

  int nx() const { return m_.dims().x(); }
  int ny() const { return m_.dims().y(); }

  /// Fills the column box [x0, x1) x [y0, y1) over the full height.
  void box(int x0, int y0, int x1, int y1, CellState s) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, nx());
    y1 = std::min(y1, ny());
    for (int z = 0; z < m_.dims().z(); ++z)
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m_.set_state(m_.linear({x, y, z}), s);
  }
  void wall(int x0, int y0, int x1, int y1) { box(x0, y0, x1, y1, CellState::Occupied); }
  void clear(int x0, int y0, int x1, int y1) { box(x0, y0, x1, y1, CellState::Free); }

  void perimeter() {
    wall(0, 0, nx(), 1);
    wall(0, ny() - 1, nx(), ny());
    wall(0, 0, 1, ny());
    wall(nx() - 1, 0, nx(), ny());
  }

  /// Closed square shell with no opening; its interior is never observable.
  void hollow(int x0, int y0, int w, int h) {
    wall(x0, y0, x0 + w, y0 + h);
    clear(x0 + 1, y0 + 1, x0 + w - 1, y0 + h - 1);
  }

  /// Launch corner, in voxels: [1, 11) covers 0.5..5.5 m at 0.5 m resolution.
  void launch_zone() {
    const int hi = static_cast<int>(std::lround(5.5 / m_.resolution()));
    const int lo = std::max(1, static_cast<int>(std::lround(0.5 / m_.resolution())));
    clear(lo, lo, hi, hi);
  }

 private:
  VoxelMap& m_;
};

int pick(Rng& rng, int lo, int hi) {
  return static_cast<int>(rng.range(static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi)));
}

void open_plan(Builder& b, Rng& rng) {
  const int nx = b.nx(), ny = b.ny();
  b.perimeter();

  // Partition walls with door gaps.
  const int partitions = pick(rng, 2, 3);
  for (int p = 0; p < partitions; ++p) {
    const bool vertical = (p % 2 == 0);
    const int along = vertical ? ny : nx;
    const int across = vertical ? nx : ny;
    const int pos = pick(rng, across / 3, 2 * across / 3) + (p >= 2 ? across / 6 : 0);
    const int len = pick(rng, along / 2, 3 * along / 4);
    const int start = rng.chance(0.5) ? 0 : along - len;
    if (vertical) b.wall(pos, start, pos + 1, start + len);
    else b.wall(start, pos, start + len, pos + 1);
    const int gaps = pick(rng, 1, 2);
    for (int g = 0; g < gaps; ++g) {
      const int at = start + pick(rng, 3, len - 7);
      if (vertical) b.clear(pos, at, pos + 1, at + 4);
      else b.clear(at, pos, at + 4, pos + 1);
    }
  }

  // Desk blocks and pillars.
  const int desks = pick(rng, 10, 14);
  for (int d = 0; d < desks; ++d) {
    const int w = pick(rng, 2, 6), h = pick(rng, 2, 3);
    const bool rot = rng.chance(0.5);
    const int x = pick(rng, 3, nx - 9), y = pick(rng, 3, ny - 9);
    if (rot) b.wall(x, y, x + h, y + w);
    else b.wall(x, y, x + w, y + h);
  }
  const int pillars = pick(rng, 6, 10);
  for (int p = 0; p < pillars; ++p) {
    const int x = pick(rng, 4, nx - 6), y = pick(rng, 4, ny - 6);
    b.wall(x, y, x + 2, y + 2);
  }

  // Sealed cabinets.
  const int cabinets = pick(rng, 2, 3);
  for (int c = 0; c < cabinets; ++c) {
    const int s = pick(rng, 5, 7);
    const int x = pick(rng, 14, nx - s - 3), y = pick(rng, 14, ny - s - 3);
    b.hollow(x, y, s, s);
  }
  b.launch_zone();
}

void cubicle(Builder& b, Rng& rng) {
  const int nx = b.nx(), ny = b.ny();
  b.perimeter();

  // Rooms along the bottom and top walls, each with a door onto the floor.
  for (int side = 0; side < 2; ++side) {
    const int depth = pick(rng, 10, 12);
    const int front = side == 0 ? depth : ny - 1 - depth;
    b.wall(1, front, nx - 1, front + 1);
    int x = 1;
    while (x < nx - 1) {
      const int w = std::min(pick(rng, 8, 14), nx - 1 - x);
      if (x + w < nx - 1) {
        if (side == 0) b.wall(x + w, 1, x + w + 1, front);
        else b.wall(x + w, front, x + w + 1, ny - 1);
      }
      const int door = x + pick(rng, 1, std::max(1, w - 4));
      b.clear(door, front, std::min(door + 3, x + w), front + 1);
      x += w + 1;
    }
    // A sealed closet in one room.
    const int cx = pick(rng, 15, nx - 10);
    const int cy = side == 0 ? 2 : ny - 7;
    b.hollow(cx, cy, 5, 5);
  }

  // Cubicle rows on the open floor: a spine wall with short dividers.
  const int y_lo = 16, y_hi = ny - 17;
  for (int y = y_lo + pick(rng, 0, 2); y + 4 < y_hi; y += pick(rng, 8, 10)) {
    const int x0 = pick(rng, 8, 14);
    const int x1 = nx - pick(rng, 8, 14);
    b.wall(x0, y, x1, y + 1);
    for (int x = x0; x <= x1; x += pick(rng, 5, 7)) {
      b.wall(x, y - 3, x + 1, y);
      b.wall(x, y + 1, x + 1, y + 4);
    }
    // Break the spine so both sides stay connected.
    const int gap = pick(rng, x0 + 4, x1 - 6);
    b.clear(gap, y, gap + 3, y + 1);
  }
  b.launch_zone();
}

void maze(Builder& b, Rng& rng, double resolution) {
  const int nx = b.nx(), ny = b.ny();
  const int pitch = std::max(3, static_cast<int>(std::lround(3.5 / resolution)));
  const int cx = (nx - 1) / pitch, cy = (ny - 1) / pitch;
  b.box(0, 0, nx, ny, CellState::Occupied);
  // Open every cell interior; walls are the lattice lines.
  auto cell_x0 = [&](int i) { return 1 + i * pitch; };
  auto cell_y0 = [&](int j) { return 1 + j * pitch; };
  for (int j = 0; j < cy; ++j)
    for (int i = 0; i < cx; ++i)
      b.clear(cell_x0(i), cell_y0(j), cell_x0(i) + pitch - 1, cell_y0(j) + pitch - 1);
  // Any leftover strip past the last full cell stays solid.

  auto open = [&](int i, int j, int di, int dj) {
    // Carve a 3-voxel door in the wall between cell (i, j) and its neighbor.
    const int half = std::max(1, (pitch - 1) / 2 - 1);
    if (di != 0) {
      const int wx = di > 0 ? cell_x0(i) + pitch - 1 : cell_x0(i) - 1;
      const int y = cell_y0(j) + half;
      b.clear(wx, y - 1, wx + 1, y + 2);
    } else {
      const int wy = dj > 0 ? cell_y0(j) + pitch - 1 : cell_y0(j) - 1;
      const int x = cell_x0(i) + half;
      b.clear(x - 1, wy, x + 2, wy + 1);
    }
  };

  std::vector<std::uint8_t> visited(static_cast<std::size_t>(cx * cy), 0);
  std::vector<std::pair<int, int>> stack{{0, 0}};
  visited[0] = 1;
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (!stack.empty()) {
    auto [i, j] = stack.back();
    int options[4], n = 0;
    for (int d = 0; d < 4; ++d) {
      const int ni = i + dirs[d][0], nj = j + dirs[d][1];
      if (ni >= 0 && nj >= 0 && ni < cx && nj < cy && !visited[nj * cx + ni]) options[n++] = d;
    }
    if (n == 0) {
      stack.pop_back();
      continue;
    }
    const int d = options[rng.range(0, static_cast<std::uint64_t>(n - 1))];
    open(i, j, dirs[d][0], dirs[d][1]);
    const int ni = i + dirs[d][0], nj = j + dirs[d][1];
    visited[nj * cx + ni] = 1;
    stack.emplace_back(ni, nj);
  }
  // Extra doors so the maze has loops.
  const int extra = (cx * cy) / 6;
  for (int e = 0; e < extra; ++e) {
    const int i = pick(rng, 0, cx - 2), j = pick(rng, 0, cy - 2);
    if (rng.chance(0.5)) open(i, j, 1, 0);
    else open(i, j, 0, 1);
  }
  // One sealed chamber inside a random cell.
  const int hi = pick(rng, 1, cx - 1), hj = pick(rng, 1, cy - 1);
  b.hollow(cell_x0(hi) + 1, cell_y0(hj) + 1, pitch - 3, pitch - 3);
  b.launch_zone();
}

}  // namespace

VoxelMap generate_scene(const SceneSpec& spec) {
  const Index3 dims = (spec.size / spec.resolution).array().round().cast<int>().matrix();
  VoxelMap map(Vec3::Zero(), spec.resolution, dims, CellState::Free);
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind) + 17));
  Builder b(map);
  switch (spec.kind) {
    case SceneKind::OpenPlan: open_plan(b, rng); break;
    case SceneKind::Cubicle: cubicle(b, rng); break;
    case SceneKind::Maze: maze(b, rng, spec.resolution); break;
  }
  return map;
}

std::vector<Vec3> default_starts(const VoxelMap& truth, int count) {
  std::vector<Vec3> out;
  const double z = std::min(1.25, truth.extent().z() / 2.0);
  for (double y = 1.75; static_cast<int>(out.size()) < count && y < truth.extent().y(); y += 1.0)
    for (double x = 1.75; static_cast<int>(out.size()) < count && x < truth.extent().x(); x += 1.0) {
      const Index3 v = truth.voxel_of(truth.origin() + Vec3(x, y, z));
      if (truth.in_bounds(v) && truth.state(v) == CellState::Free) out.push_back(truth.center(v));
    }
  if (static_cast<int>(out.size()) < count) throw MapError("not enough free launch positions");
  return out;
}

std::vector<std::uint8_t> explorable_mask(const VoxelMap& truth, const std::vector<Vec3>& starts) {
  std::vector<std::uint32_t> seeds;
  for (const Vec3& s : starts) seeds.push_back(truth.linear(truth.voxel_of(s)));
  auto mask = flood_fill(truth, seeds, [&](std::uint32_t i) {
    return truth.state(i) == CellState::Free;
  });
  std::vector<std::uint8_t> out = mask;
  for (std::uint32_t i = 0; i < truth.size(); ++i) {
    if (!mask[i]) continue;
    truth.for_each_neighbor6(i, [&](std::uint32_t n) {
      if (truth.state(n) == CellState::Occupied) out[n] = 1;
    });
  }
  return out;
}

}  // namespace mrx
