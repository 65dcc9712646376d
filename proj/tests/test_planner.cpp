#include "oracles.hpp"

#include "mrx/cp_planner.hpp"

#include <doctest.h>

using namespace mrx;

namespace {

double tc(std::vector<Vec3> pts, const Vec3& v0) { return tour_cost(pts, v0, MotionLimits{}); }

Eigen::MatrixXd random_matrix(Rng& rng, int n) {
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = i == j ? 0.0 : 1.0 + 9.0 * rng.uniform();
  return c;
}

// 26-connected components of a voxel list.
std::set<std::vector<std::uint32_t>> components26(const VoxelMap& m, const std::vector<std::uint32_t>& vox) {
  std::set<std::uint32_t> left(vox.begin(), vox.end());
  std::set<std::vector<std::uint32_t>> out;
  while (!left.empty()) {
    std::vector<std::uint32_t> group{*left.begin()};
    left.erase(left.begin());
    for (std::size_t h = 0; h < group.size(); ++h) {
      const Index3 v = m.unravel(group[h]);
      for (auto it = left.begin(); it != left.end();) {
        if ((m.unravel(*it) - v).cwiseAbs().maxCoeff() <= 1) {
          group.push_back(*it);
          it = left.erase(it);
        } else {
          ++it;
        }
      }
    }
    std::sort(group.begin(), group.end());
    out.insert(group);
  }
  return out;
}

bool sees(const VoxelMap& m, const Vec3& p, std::uint32_t target, double range) {
  const Vec3 q = m.center(target);
  const double d = (q - p).norm();
  if (d > range) return false;
  if (d == 0.0) return true;
  for (auto [i, t] : oracle::ray_voxels(m, p, (q - p) / d, d)) {
    if (i == target) return true;
    if (m.state(i) != CellState::Free) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("tour cost fixtures") {
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(10, 0, 0)}, Vec3(2, 0, 0)) - 5.0) <= 1e-9);
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(10, 0, 0)}, Vec3(2, 0, 0)) - 5.0) <= 1e-9);
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(10, 0, 0)}, Vec3(-2, 0, 0)) - 7.0) <= 1e-9);
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(10, 0, 0)}, Vec3(0, 2, 0)) - 5.5) <= 1e-9);
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(10, 0, 0)}, Vec3::Zero()) - 5.5) <= 1e-9);
  // a right-angle turn costs one perpendicular entry
  CHECK(std::abs(tc({Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(4, 6, 0)}, Vec3(2, 0, 0)) - 5.5) <= 1e-9);
  CHECK_THROWS_AS(tc({Vec3::Zero()}, Vec3::Zero()), PlanError);
  CHECK_THROWS_AS(tc({Vec3::Zero(), Vec3::Zero()}, Vec3::Zero()), PlanError);
  const std::vector<Point3<float>> f{Point3<float>(0, 0, 0), Point3<float>(10, 0, 0)};
  CHECK(tour_cost<float>(f, Point3<float>(2, 0, 0), 2.0f, 2.0f) == doctest::Approx(5.0f));
}

TEST_CASE("path TSP matches exhaustive search on small fixtures") {
  Rng rng(8);
  for (int n = 1; n <= 8; ++n)
    for (bool fixed_end : {false, true}) {
      if (fixed_end && n < 2) continue;
      for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd c = random_matrix(rng, n);
        const std::vector<int> order = solve_path_tsp(c, fixed_end);
        REQUIRE(static_cast<int>(order.size()) == n);
        CHECK(order.front() == 0);
        if (fixed_end) CHECK(order.back() == n - 1);
        std::vector<int> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
        const int free_nodes = n - 1 - (fixed_end ? 1 : 0);
        if (free_nodes <= 6)
          CHECK(path_tsp_cost(c, order) == doctest::Approx(oracle::best_path(c, fixed_end)).epsilon(1e-12));
      }
    }
}

TEST_CASE("global tour") {
  const MotionLimits lim;
  const LegPath straight = [](const Vec3& a, const Vec3& b) { return std::optional(std::vector<Vec3>{a, b}); };
  SUBCASE("single stop") {
    const auto t = plan_global_tour(Vec3::Zero(), Vec3::Zero(), {{7, Vec3(3, 0, 0)}}, straight, lim);
    REQUIRE(t.order.size() == 1);
    CHECK(t.order[0] == 7);
  }
  SUBCASE("collinear stops go near to far") {
    const std::vector<TourStop> stops{{1, Vec3(9, 0, 0)}, {2, Vec3(3, 0, 0)}, {3, Vec3(6, 0, 0)}};
    const auto t = plan_global_tour(Vec3::Zero(), Vec3::Zero(), stops, straight, lim);
    CHECK(t.order == std::vector<std::uint64_t>{2, 3, 1});
    CHECK(t.total == doctest::Approx(oracle::best_path(t.cost, false)).epsilon(1e-12));
  }
  SUBCASE("cost is asymmetric in the entry velocity") {
    const std::vector<TourStop> stops{{1, Vec3(4, 0, 0)}, {2, Vec3(-4, 0, 0)}};
    const auto t = plan_global_tour(Vec3::Zero(), Vec3(2, 0, 0), stops, straight, lim);
    const double fwd = t.cost(0, 1) + t.cost(1, 2), back = t.cost(0, 2) + t.cost(2, 1);
    CHECK(fwd != doctest::Approx(back));
    CHECK(t.order.front() == 1);
  }
  SUBCASE("unreachable stops go last") {
    const LegPath blocked = [](const Vec3& a, const Vec3& b) -> std::optional<std::vector<Vec3>> {
      if (b.x() > 100 || a.x() > 100) return std::nullopt;
      return std::vector<Vec3>{a, b};
    };
    const std::vector<TourStop> stops{{1, Vec3(200, 0, 0)}, {2, Vec3(3, 0, 0)}};
    const auto t = plan_global_tour(Vec3::Zero(), Vec3::Zero(), stops, blocked, lim);
    CHECK(t.order == std::vector<std::uint64_t>{2, 1});
    CHECK(t.unreachable == std::vector<std::uint64_t>{1});
  }
}

TEST_CASE("frontier clusters") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(30, 10, 2), CellState::Free);
  SUBCASE("a lone voxel") {
    const std::vector<std::uint32_t> f{m.linear(Index3(4, 4, 1))};
    const auto cs = cluster_frontiers(m, f, 5.0);
    REQUIRE(cs.size() == 1);
    CHECK((cs[0].centroid - m.center(f[0])).norm() < 1e-12);
  }
  SUBCASE("a 20-voxel line splits in two") {
    std::vector<std::uint32_t> f;
    for (int x = 0; x < 20; ++x) f.push_back(m.linear(Index3(x, 3, 0)));
    const auto cs = cluster_frontiers(m, f, 10 * m.resolution());
    CHECK(cs.size() == 2);
    CHECK(std::abs(cs[0].axis.x()) == doctest::Approx(1.0));
  }
  SUBCASE("clusters refine connected components") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::uint32_t> f;
      for (std::uint32_t i = 0; i < m.size(); ++i)
        if (rng.chance(0.15)) f.push_back(i);
      const auto cs = cluster_frontiers(m, f, 3.0);
      std::map<std::uint32_t, std::size_t> owner;
      for (std::size_t c = 0; c < cs.size(); ++c)
        for (std::uint32_t v : cs[c].voxels) {
          CHECK(owner.count(v) == 0);
          owner[v] = c;
        }
      CHECK(owner.size() == f.size());
      // every cluster sits inside one component, and each component is a union of clusters
      std::set<std::vector<std::uint32_t>> rebuilt;
      for (const auto& comp : components26(m, f)) {
        std::set<std::size_t> ids;
        for (std::uint32_t v : comp) ids.insert(owner.at(v));
        std::vector<std::uint32_t> merged;
        for (std::size_t c : ids) merged.insert(merged.end(), cs[c].voxels.begin(), cs[c].voxels.end());
        std::sort(merged.begin(), merged.end());
        CHECK(merged == comp);
      }
    }
  }
}

TEST_CASE("viewpoints") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(30, 30, 3));
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 15; ++x) m.set_state(m.linear(Index3(x, y, z)), CellState::Free);
  recompute_frontiers(m);
  std::vector<std::uint32_t> f;
  for (int z = 0; z < 3; ++z)
    for (int y = 12; y < 18; ++y) f.push_back(m.linear(Index3(14, y, z)));
  const FrontierCluster c = make_cluster(m, f);
  ViewpointParams params;

  SUBCASE("the chosen viewpoint sees something") {
    const auto vp = sample_viewpoints(c, m, Vec3(1, 1, 0.75), params);
    REQUIRE(vp);
    CHECK(vp->covered >= 1);
    CHECK(m.state(m.voxel_of(vp->position)) == CellState::Free);
  }
  SUBCASE("coverage counts match an exhaustive recount") {
    const auto cands = viewpoint_candidates(c, m, params);
    REQUIRE_FALSE(cands.empty());
    std::size_t best = 0;
    for (const Viewpoint& v : cands) {
      std::size_t n = 0;
      for (std::uint32_t t : c.voxels) n += sees(m, v.position, t, params.sensor_range);
      CHECK(n == v.covered);
      best = std::max(best, n);
    }
    CHECK(sample_viewpoints(c, m, Vec3(1, 1, 0.75), params)->covered == best);
  }
  SUBCASE("ties go to the candidate nearer the agent") {
    // the fixture is mirror-symmetric in y about the cluster centroid
    const auto low = sample_viewpoints(c, m, Vec3(3, 0.5, 0.75), params);
    const auto high = sample_viewpoints(c, m, Vec3(3, 14.5, 0.75), params);
    REQUIRE(low);
    REQUIRE(high);
    CHECK(low->covered == high->covered);
    if (low->position.y() != high->position.y()) CHECK(low->position.y() < high->position.y());
  }
}

TEST_CASE("local tour") {
  const Vec3 s(0, 0, 0), e(10, 0, 0);
  CHECK(plan_local_tour(s, e, {}).empty());
  CHECK(plan_local_tour(s, e, {Viewpoint{Vec3(5, 5, 0), 0.0, 3}}) == std::vector<std::size_t>{0});
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Viewpoint> vps;
    for (int k = 0; k < 4; ++k) vps.push_back({Vec3(10 * rng.uniform(), 10 * rng.uniform(), 0), 0.0, 1});
    const auto order = plan_local_tour(s, e, vps);
    REQUIRE(order.size() == 4);
    std::vector<Vec3> pts{s};
    for (std::size_t i : order) pts.push_back(vps[i].position);
    pts.push_back(e);
    double got = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) got += (pts[i] - pts[i - 1]).norm();
    Eigen::MatrixXd c(6, 6);
    std::vector<Vec3> all{s};
    for (const auto& v : vps) all.push_back(v.position);
    all.push_back(e);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) c(i, j) = (all[static_cast<std::size_t>(i)] - all[static_cast<std::size_t>(j)]).norm();
    CHECK(got == doctest::Approx(oracle::best_path(c, true)).epsilon(1e-12));
  }
}
