#include "oracles.hpp"

#include "mrx/allocation.hpp"
#include "mrx/connectivity_graph.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace mrx;

TEST_CASE("contiguity kernel") {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) CHECK(contiguity_kernel(rng.uniform()) == 1.0);
  CHECK(contiguity_kernel(1.0) == 1.0);
  CHECK(contiguity_kernel(3.0) == 5.0);
  const double eps = 1e-3;
  CHECK(std::abs(contiguity_kernel(1.0 + eps) - 1.0) <= eps * eps + 1e-12);

  CostParams p;  // lambda_c 1.2, grid edge 5
  CHECK(contiguity_penalty(6.0, p) == 1.0);
  CHECK(contiguity_penalty(3.0, p) == 1.0);
  CHECK(contiguity_penalty(18.0, p) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(contiguity_kernel<float>(3.0f) == 5.0f);
}

TEST_CASE("cost params are validated") {
  CostParams p;
  p.sigma_q = 0.9;
  CHECK_THROWS_AS(p.validate(), AllocationError);
  p = {};
  p.lambda_c = 0.5;
  CHECK_THROWS_AS(p.validate(), AllocationError);
}

TEST_CASE("traversal cost on simple fixtures") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(16, 3, 1), CellState::Free);
  CostParams p;
  const Vec3 a = m.center(Index3(1, 1, 0));
  CHECK(traversal_cost(a, a, m, nullptr, p) == 0.0);
  const Vec3 b = m.center(Index3(13, 1, 0));
  CHECK(traversal_cost(a, b, m, nullptr, p) == doctest::Approx(6.0).epsilon(1e-12));
  for (int y = 0; y < 3; ++y) m.set_state(m.linear(Index3(7, y, 0)), CellState::Occupied);
  CHECK(traversal_cost(a, b, m, nullptr, p) == p.m_inf);
}

TEST_CASE("voxel traversal cost equals Dijkstra over non-occupied voxels") {
  Rng rng(14);
  CostParams p;
  p.d_thr = 1e6;
  for (int trial = 0; trial < 20; ++trial) {
    const VoxelMap m = oracle::random_map(rng, Index3(12, 10, 3), 0.3, 0.3);
    std::vector<std::uint32_t> open;
    for (std::uint32_t i = 0; i < m.size(); ++i)
      if (m.state(i) != CellState::Occupied) open.push_back(i);
    const std::uint32_t s = open[rng.range(0, open.size() - 1)];
    const auto dist = oracle::relax_all(m, s);
    for (int k = 0; k < 10; ++k) {
      const std::uint32_t t = open[rng.range(0, open.size() - 1)];
      const double got = traversal_cost(m.center(s), m.center(t), m, nullptr, p);
      if (dist[t] == oracle::kInf) CHECK(got == p.m_inf);
      else CHECK(got == doctest::Approx(dist[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("far legs go through the graph") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(40, 10, 1), CellState::Free);
  ConnectivityGraph g(m, 5.0);
  CostParams p;
  p.d_thr = 5.0;
  const Vec3 a(1.0, 2.5, 0.25), b(19.0, 2.5, 0.25);
  const double c = traversal_cost(a, b, m, &g, p);
  CHECK(c >= (a - b).norm() - 1e-9);
  const auto va = *g.nearest_vertex(m, a), vb = *g.nearest_vertex(m, b);
  const double want = (a - g.vertex(va).anchor).norm() + g.distance(va, vb) + (g.vertex(vb).anchor - b).norm();
  CHECK(c == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cost matrix block layout") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(20, 20, 1), CellState::Free);
  std::vector<AgentSlot> agents{{0, Vec3(1, 1, 0.25)}, {1, Vec3(2, 1, 0.25)}};
  std::vector<TaskSlot> tasks{{10, Vec3(5, 5, 0.25), 40}, {11, Vec3(8, 2, 0.25), 30}, {12, Vec3(3, 9, 0.25), 30}};
  CostParams params;
  const AllocationProblem p = build_problem(agents, tasks, m, nullptr, params);
  REQUIRE(p.cost.rows() == 6);
  REQUIRE(p.cost.cols() == 6);
  const double M = params.m_inf;
  CHECK(p.capacity == doctest::Approx(55.0));
  CHECK(p.cost(0, 0) == M);
  for (int j = 1; j <= 2; ++j) CHECK(p.cost(0, j) == 0.0);
  for (int j = 3; j <= 5; ++j) CHECK(p.cost(0, j) == M);
  for (int i = 1; i <= 2; ++i) {
    CHECK(p.cost(i, 0) == 0.0);
    for (int j = 1; j <= 2; ++j) CHECK(p.cost(i, j) == 0.0);
    for (int j = 3; j <= 5; ++j) CHECK((p.cost(i, j) > 0.0 && p.cost(i, j) < M));
  }
  for (int i = 3; i <= 5; ++i) {
    CHECK(p.cost(i, 0) == 0.0);
    for (int j = 1; j <= 2; ++j) CHECK(p.cost(i, j) == M);
    for (int j = 3; j <= 5; ++j) {
      CHECK(p.cost(i, j) == p.cost(j, i));
      CHECK(p.cost(i, j) >= 0.0);
    }
  }
}

TEST_CASE("inside the connectivity radius costs are raw lengths") {
  VoxelMap m(Vec3::Zero(), 0.5, Index3(12, 12, 1), CellState::Free);
  std::vector<AgentSlot> agents{{0, m.center(Index3(0, 0, 0))}};
  std::vector<TaskSlot> tasks{{1, m.center(Index3(4, 0, 0)), 1}, {2, m.center(Index3(4, 6, 0)), 1}};
  CostParams params;
  const AllocationProblem p = build_problem(agents, tasks, m, nullptr, params);
  CHECK(p.cost(2, 3) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(p.cost(1, 2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("no tasks means empty sequences") {
  AllocationProblem p;
  p.agents = {{0, Vec3::Zero()}, {1, Vec3::Ones()}};
  p.cost = assemble_matrix(Eigen::MatrixXd(2, 0), Eigen::MatrixXd(0, 0), p.m_inf);
  const AllocationResult r = solve(p, 1);
  REQUIRE(r.sequences.size() == 2);
  CHECK(r.sequences[0].empty());
  CHECK(r.sequences[1].empty());
  CHECK(r.total_cost == 0.0);
}

TEST_CASE("one agent gets the best open tour") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t nt = rng.range(1, 6);
    const AllocationProblem p = oracle::random_instance(rng, 1, nt);
    const AllocationResult r = solve(p, trial);
    REQUIRE(r.routes[0].size() == nt);
    Eigen::MatrixXd c(nt + 1, nt + 1);
    for (std::size_t i = 0; i <= nt; ++i)
      for (std::size_t j = 0; j <= nt; ++j)
        c(i, j) = p.cost(i == 0 ? p.agent_node(0) : p.task_node(i - 1), j == 0 ? p.agent_node(0) : p.task_node(j - 1));
    CHECK(r.total_cost == doctest::Approx(oracle::best_path(c, false)).epsilon(1e-9));
  }
}

TEST_CASE("agents keep their own cluster") {
  CostParams params;
  AllocationProblem p;
  p.agents = {{0, Vec3(0, 0, 0)}, {1, Vec3(30, 0, 0)}};
  for (int i = 0; i < 3; ++i) p.tasks.push_back({std::uint64_t(i), Vec3(2 + i, 1, 0), 1});
  for (int i = 0; i < 3; ++i) p.tasks.push_back({std::uint64_t(10 + i), Vec3(28 - i, 1, 0), 1});
  p.capacity = params.sigma_q * p.workload() / 2;
  Eigen::MatrixXd at(2, 6), tt(6, 6);
  auto w = [&](const Vec3& a, const Vec3& b) {
    const double l = (a - b).norm();
    return contiguity_penalty(l, params) * l;
  };
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 6; ++i) at(k, i) = w(p.agents[k].position, p.tasks[i].anchor);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) tt(i, j) = w(p.tasks[i].anchor, p.tasks[j].anchor);
  p.cost = assemble_matrix(at, tt, p.m_inf);
  const AllocationResult r = solve(p, 0);
  for (std::uint64_t id : r.sequences[0]) CHECK(id < 10);
  for (std::uint64_t id : r.sequences[1]) CHECK(id >= 10);
  CHECK(r.total_cost == doctest::Approx(oracle::best_allocation(p)).epsilon(1e-9));
}

TEST_CASE("solver stays close to the optimum and within capacity") {
  Rng rng(99);
  int checked = 0;
  while (checked < 20) {
    const AllocationProblem p = oracle::random_instance(rng, rng.range(1, 3), rng.range(1, 8));
    const double best = oracle::best_allocation(p);
    if (best == oracle::kInf) continue;  // no packing exists
    const AllocationResult r = solve(p, checked);
    CHECK(r.deferred.empty());
    for (double load : r.loads) CHECK(load <= p.capacity + 1e-9);
    CHECK(r.total_cost <= 1.10 * best + 1e-9);
    CHECK(r.total_cost >= best - 1e-9);
    ++checked;
  }
}

TEST_CASE("a task heavier than the capacity rides alone") {
  Rng rng(1);
  AllocationProblem p = oracle::random_instance(rng, 3, 5);
  p.tasks[2].demand = 1000;
  p.capacity = 1.1 * p.workload() / 3;
  const AllocationResult r = solve(p, 0);
  CHECK(r.oversized);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& route = r.routes[k];
    if (std::find(route.begin(), route.end(), 2) != route.end()) CHECK(route.size() == 1);
    else CHECK(r.loads[k] <= p.capacity + 1e-9);
  }
}

TEST_CASE("tasks that no packing fits are deferred, not overloaded") {
  Rng rng(3);
  AllocationProblem p = oracle::random_instance(rng, 2, 7);
  const std::uint32_t demands[] = {126, 600, 600, 600, 600, 450, 12};
  for (std::size_t i = 0; i < 7; ++i) p.tasks[i].demand = demands[i];
  p.capacity = 1.1 * p.workload() / 2;
  REQUIRE(oracle::best_allocation(p) == oracle::kInf);
  const AllocationResult r = solve(p, 0);
  CHECK_FALSE(r.deferred.empty());
  CHECK_FALSE(r.oversized);
  std::multiset<std::uint64_t> seen(r.deferred.begin(), r.deferred.end());
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(r.loads[k] <= p.capacity);
    seen.insert(r.sequences[k].begin(), r.sequences[k].end());
  }
  std::multiset<std::uint64_t> all;
  for (const auto& t : p.tasks) all.insert(t.id);
  CHECK(seen == all);
}

TEST_CASE("unreachable tasks are reported, not routed") {
  Rng rng(4);
  AllocationProblem p = oracle::random_instance(rng, 2, 4);
  for (int k = 0; k < 2; ++k) p.cost(p.agent_node(k), p.task_node(1)) = p.m_inf;
  const AllocationResult r = solve(p, 0);
  REQUIRE(r.unreachable.size() == 1);
  CHECK(r.unreachable[0] == p.tasks[1].id);
  for (const auto& route : r.routes) CHECK(std::find(route.begin(), route.end(), 1) == route.end());
}

TEST_CASE("instances round-trip through text and solve the same") {
  Rng rng(12);
  const AllocationProblem p = oracle::random_instance(rng, 2, 6);
  std::stringstream s;
  write_instance(s, p, 77);
  std::uint64_t seed = 0;
  const AllocationProblem q = read_instance(s, &seed);
  CHECK(seed == 77);
  CHECK(q.capacity == p.capacity);
  CHECK((q.cost - p.cost).cwiseAbs().maxCoeff() == 0.0);
  std::ostringstream a, b;
  write_result(a, p, solve(p, 77));
  write_result(b, q, solve(q, 77));
  CHECK(a.str() == b.str());
}
