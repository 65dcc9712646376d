#pragma once

#include "mrx/voxel_map.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mrx {

enum class SceneKind { Cubicle, OpenPlan, Maze };

std::optional<SceneKind> parse_scene_kind(const std::string& name);
const char* to_string(SceneKind k);

struct SceneSpec {
  SceneKind kind = SceneKind::OpenPlan;
  Vec3 size = Vec3(30.0, 30.0, 3.0);
  double resolution = 0.5;
  std::uint64_t seed = 0;
};

/// Ground-truth map: every voxel FREE or OCCUPIED, walls full height.
/// The corner region [0.5, 5.5]^2 m is kept free for agent launch.
VoxelMap generate_scene(const SceneSpec& spec);

/// Launch positions packed along +x from (1.75, 1.75) at mid height.
std::vector<Vec3> default_starts(const VoxelMap& truth, int count);

/// 6-connected flood fill over voxels where passable(i) holds, from seeds.
template <typename Passable>
std::vector<std::uint8_t> flood_fill(const VoxelMap& map, const std::vector<std::uint32_t>& seeds,
                                     Passable&& passable) {
  std::vector<std::uint8_t> seen(map.size(), 0);
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s : seeds)
    if (passable(s) && !seen[s]) {
      seen[s] = 1;
      stack.push_back(s);
    }
  while (!stack.empty()) {
    const std::uint32_t i = stack.back();
    stack.pop_back();
    map.for_each_neighbor6(i, [&](std::uint32_t n) {
      if (!seen[n] && passable(n)) {
        seen[n] = 1;
        stack.push_back(n);
      }
    });
  }
  return seen;
}

/// Voxels an ideal explorer must observe: ground-truth FREE voxels reachable
/// from the starts plus OCCUPIED voxels face-adjacent to them.
std::vector<std::uint8_t> explorable_mask(const VoxelMap& truth, const std::vector<Vec3>& starts);

}  // namespace mrx
