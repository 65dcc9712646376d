#include "oracles.hpp"

#include "mrx/scenes.hpp"
#include "mrx/voxel_map.hpp"

#include <doctest.h>

#include <sstream>

using namespace mrx;

namespace {

AgentState at(const Vec3& p) {
  AgentState a;
  a.position = p;
  return a;
}

std::size_t count_state(const MapDelta& d, CellState s) {
  return static_cast<std::size_t>(
      std::count_if(d.entries.begin(), d.entries.end(), [&](const DeltaEntry& e) { return e.state == s; }));
}

void apply(VoxelMap& m, const MapDelta& d) {
  const auto changed = merge_deltas(m, d);
  update_frontiers(m, changed);
}

}  // namespace

TEST_CASE("map shape and bounds") {
  VoxelMap m(Vec3(1, 2, 3), 0.5, Index3(4, 5, 6));
  CHECK(m.size() == 120);
  CHECK(m.count(CellState::Unknown) == 120);
  CHECK(m.voxel_of(Vec3(1.1, 2.6, 3.0)) == Index3(0, 1, 0));
  CHECK(m.unravel(m.linear(Index3(3, 2, 5))) == Index3(3, 2, 5));
  CHECK_FALSE(m.contains(Vec3(0.99, 2.5, 3.5)));
  CHECK_THROWS_AS(VoxelMap(Vec3::Zero(), 0.0, Index3(1, 1, 1)), MapError);
  CHECK_THROWS_AS(VoxelMap(Vec3::Zero(), 1.0, Index3(0, 1, 1)), MapError);
}

TEST_CASE("sense in an empty room sees every voxel free") {
  VoxelMap truth(Vec3::Zero(), 1.0, Index3(5, 5, 1), CellState::Free);
  VoxelMap known(Vec3::Zero(), 1.0, Index3(5, 5, 1));
  const MapDelta d = sense(truth, known, at(Vec3(2.5, 2.5, 0.5)), 10.0, RaySpec{});
  CHECK(d.entries.size() == 25);
  CHECK(count_state(d, CellState::Occupied) == 0);
}

TEST_CASE("first hit occludes what lies behind it") {
  VoxelMap truth(Vec3::Zero(), 1.0, Index3(7, 1, 1), CellState::Free);
  truth.set_state(truth.linear(Index3(4, 0, 0)), CellState::Occupied);
  VoxelMap known(Vec3::Zero(), 1.0, Index3(7, 1, 1));
  const MapDelta d = sense(truth, known, at(Vec3(3.5, 0.5, 0.5)), 10.0, RaySpec{});
  apply(known, d);
  CHECK(known.state(Index3(4, 0, 0)) == CellState::Occupied);
  CHECK(known.state(Index3(5, 0, 0)) == CellState::Unknown);
  CHECK(known.state(Index3(6, 0, 0)) == CellState::Unknown);
  CHECK(known.state(Index3(0, 0, 0)) == CellState::Free);
}

TEST_CASE("sense rejects bad poses") {
  VoxelMap truth(Vec3::Zero(), 1.0, Index3(3, 3, 1), CellState::Free);
  truth.set_state(0, CellState::Occupied);
  VoxelMap known(Vec3::Zero(), 1.0, Index3(3, 3, 1));
  CHECK_THROWS_AS(sense(truth, known, at(Vec3(-1, 0.5, 0.5)), 5.0, RaySpec{}), MapError);
  CHECK_THROWS_AS(sense(truth, known, at(Vec3(0.5, 0.5, 0.5)), 5.0, RaySpec{}), MapError);
}

TEST_CASE("sense matches the line-of-sight oracle on random maps") {
  Rng rng(11);
  const RaySpec spec{4.0, 8.0};
  const auto dirs = ray_directions(spec);
  for (int trial = 0; trial < 20; ++trial) {
    VoxelMap truth = oracle::random_map(rng, Index3(20, 20, 3), 0.15);
    std::vector<std::uint32_t> free;
    for (std::uint32_t i = 0; i < truth.size(); ++i)
      if (truth.state(i) == CellState::Free) free.push_back(i);
    const std::uint32_t s = free[rng.range(0, free.size() - 1)];
    const Vec3 p = truth.center(s) + Vec3(0.0123, 0.0371, -0.0217);
    const double range = 4.0 + 4.0 * rng.uniform();

    VoxelMap known(truth.origin(), truth.resolution(), truth.dims());
    const MapDelta d = sense(truth, known, at(p), range, dirs);
    const auto want = oracle::visibility(truth, p, range, dirs);
    REQUIRE(d.entries.size() == want.size());
    for (const auto& e : d.entries) {
      auto it = want.find(e.index);
      REQUIRE(it != want.end());
      CHECK(it->second == e.state);
    }
  }
}

TEST_CASE("deltas only move voxels away from unknown") {
  Rng rng(5);
  VoxelMap truth = oracle::random_map(rng, Index3(12, 12, 2), 0.2);
  truth.set_state(truth.linear(Index3(6, 6, 0)), CellState::Free);
  VoxelMap known(truth.origin(), truth.resolution(), truth.dims());
  const AgentState a = at(truth.center(Index3(6, 6, 0)));
  apply(known, sense(truth, known, a, 6.0, RaySpec{}));
  const MapDelta again = sense(truth, known, a, 6.0, RaySpec{});
  CHECK(again.entries.empty());
  for (const auto& e : sense(truth, VoxelMap(truth.origin(), 0.5, truth.dims()), a, 6.0, RaySpec{}).entries)
    CHECK(e.state != CellState::Unknown);
}

TEST_CASE("frontier definition") {
  VoxelMap all(Vec3::Zero(), 1.0, Index3(4, 4, 2), CellState::Free);
  recompute_frontiers(all);
  CHECK(all.frontier_count() == 0);

  VoxelMap one(Vec3::Zero(), 1.0, Index3(3, 3, 3));
  const std::uint32_t c = one.linear(Index3(1, 1, 1));
  one.set_state(c, CellState::Free);
  const std::vector<std::uint32_t> changed{c};
  const auto f = update_frontiers(one, changed);
  REQUIRE(f.size() == 1);
  CHECK(f[0] == c);
}

TEST_CASE("incremental frontiers equal a full scan") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    VoxelMap m = oracle::random_map(rng, Index3(9, 8, 3), 0.2, 0.5);
    for (int step = 0; step < 3; ++step) {
      std::vector<std::uint32_t> changed;
      for (std::uint32_t i = 0; i < m.size(); ++i)
        if (m.state(i) == CellState::Unknown && rng.chance(0.2)) {
          m.set_state(i, rng.chance(0.2) ? CellState::Occupied : CellState::Free);
          changed.push_back(i);
        }
      update_frontiers(m, changed);
    }
    std::size_t n = 0;
    for (std::uint32_t i = 0; i < m.size(); ++i) {
      bool want = false;
      if (m.state(i) == CellState::Free)
        m.for_each_neighbor6(i, [&](std::uint32_t j) { want = want || m.state(j) == CellState::Unknown; });
      CHECK(m.is_frontier(i) == want);
      n += want;
    }
    CHECK(m.frontier_count() == n);
  }
}

TEST_CASE("merge is idempotent and takes unions") {
  VoxelMap truth(Vec3::Zero(), 1.0, Index3(11, 3, 1), CellState::Free);
  for (int y = 0; y < 3; ++y) truth.set_state(truth.linear(Index3(5, y, 0)), CellState::Occupied);
  VoxelMap a(Vec3::Zero(), 1.0, truth.dims()), b = a;
  apply(a, sense(truth, a, at(Vec3(1.5, 1.5, 0.5)), 20.0, RaySpec{}));
  apply(b, sense(truth, b, at(Vec3(9.5, 1.5, 0.5)), 20.0, RaySpec{}));

  VoxelMap before = a;
  CHECK(merge_deltas(a, diff(a, VoxelMap(a.origin(), 1.0, a.dims()))).empty());
  CHECK(a == before);

  VoxelMap ab = a, ba = b;
  merge_deltas(ab, diff(b, VoxelMap(b.origin(), 1.0, b.dims())));
  merge_deltas(ba, diff(a, VoxelMap(a.origin(), 1.0, a.dims())));
  CHECK(ab == ba);
  for (std::uint32_t i = 0; i < truth.size(); ++i) {
    const CellState want = a.state(i) != CellState::Unknown ? a.state(i) : b.state(i);
    CHECK(ab.state(i) == want);
  }
}

TEST_CASE("free versus occupied resolves to occupied in both orders") {
  MapDelta f, o;
  f.entries = {{4, CellState::Free}};
  o.entries = {{4, CellState::Occupied}};
  for (bool free_first : {true, false}) {
    VoxelMap m(Vec3::Zero(), 1.0, Index3(3, 3, 1));
    merge_deltas(m, free_first ? f : o);
    merge_deltas(m, free_first ? o : f);
    CHECK(m.state(4) == CellState::Occupied);
  }
  VoxelMap m(Vec3::Zero(), 1.0, Index3(3, 3, 1));
  MapDelta bad;
  bad.entries = {{99, CellState::Free}};
  CHECK_THROWS_AS(merge_deltas(m, bad), MapError);
}

TEST_CASE("path log length matches distance traveled") {
  AgentState a;
  a.record(Vec3::Zero());
  Rng rng(1);
  for (int i = 0; i < 50; ++i) a.record(a.position + Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
  double sum = 0.0;
  for (std::size_t i = 1; i < a.path_log.size(); ++i) sum += (a.path_log[i] - a.path_log[i - 1]).norm();
  CHECK(a.distance_traveled == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("text maps round-trip") {
  std::istringstream in("resolution 0.5\n#..#\n....\n\n....\n.##.\n");
  const VoxelMap m = load_text_map(in);
  CHECK(m.dims() == Index3(4, 2, 2));
  CHECK(m.state(Index3(0, 0, 0)) == CellState::Occupied);
  CHECK(m.state(Index3(1, 1, 1)) == CellState::Occupied);
  std::ostringstream out;
  save_text_map(out, m);
  std::istringstream back(out.str());
  CHECK(load_text_map(back) == m);
}

TEST_CASE("generated scenes are deterministic and leave the launch corner free") {
  for (SceneKind k : {SceneKind::OpenPlan, SceneKind::Cubicle, SceneKind::Maze}) {
    SceneSpec s;
    s.kind = k;
    s.seed = 7;
    const VoxelMap a = generate_scene(s), b = generate_scene(s);
    CHECK(a == b);
    CHECK(a.count(CellState::Unknown) == 0);
    for (const Vec3& p : default_starts(a, 4)) CHECK(a.state(a.voxel_of(p)) == CellState::Free);
  }
}
