#include "oracles.hpp"

#include "mrx/sim.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mrx;
using nlohmann::json;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mrx_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

/// Writes rows (one z slice repeated nz times) to a text map file.
std::string write_map(const std::string& dir, const std::vector<std::string>& rows, int nz) {
  const std::string path = dir + "/map.txt";
  std::ofstream out(path);
  out << "resolution 0.5\n";
  for (int z = 0; z < nz; ++z) {
    if (z) out << "\n";
    for (const auto& r : rows) out << r << "\n";
  }
  return path;
}

ScenarioConfig small_scene(SceneKind kind, int agents, std::uint64_t seed) {
  ScenarioConfig c;
  c.generator = kind;
  c.size = Vec3(14.0, 14.0, 2.0);
  c.agents = agents;
  c.seed = seed;
  c.max_ticks = 6000;
  return c;
}

}  // namespace

TEST_CASE("scenario keys are strict") {
  CHECK_NOTHROW(parse_scenario(json::parse(R"({"name":"a","agents":2})")));
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"name":"a","agent":2})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"map":{"generator":"maze","colour":1}})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"network":{"drop":0.1,"loss":0.1}})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"agents":"four"})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"mode":"fast"})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"map":{"generator":"castle"}})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"network":{"drop":1.0}})")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(json::parse(R"({"agents":2,"starts":[[1,1,1]]})")), ConfigError);
  CHECK(std::isinf(parse_scenario(json::parse(R"({"r_comm":"inf"})")).r_comm));
}

TEST_CASE("scenarios survive a trip through json") {
  ScenarioConfig c = small_scene(SceneKind::Maze, 3, 17);
  c.r_comm = std::numeric_limits<double>::infinity();
  c.mode = Mode::NoGraph;
  c.network.drop = 0.2;
  const json j = to_json(c);
  const ScenarioConfig back = parse_scenario(j);
  CHECK(to_json(back) == j);
  CHECK(std::isinf(back.r_comm));
  CHECK(back.mode == Mode::NoGraph);
}

TEST_CASE("greedy step picks the cheaper of two frontier pockets") {
  // 20 m x 4 m x 1 m, all known except two small pockets 3 m and 9 m away.
  VoxelMap m(Vec3::Zero(), 0.5, Index3(40, 8, 2), CellState::Free);
  auto pocket = [&](int x0) {
    for (int x = x0; x < x0 + 2; ++x)
      for (int y = 3; y < 5; ++y)
        for (int z = 0; z < 2; ++z) m.set_state(m.linear(Index3(x, y, z)), CellState::Unknown);
  };
  pocket(12);
  pocket(30);
  recompute_frontiers(m);
  const Vec3 agent(3.25, 2.25, 0.25);
  CostParams params;
  ViewpointParams vp;
  const auto choice = greedy_baseline_step(m, agent, params, vp);
  REQUIRE(choice);
  REQUIRE(choice->costs.size() == 2);
  CHECK(choice->target.x() < 10.0);
  CHECK(choice->cost == *std::min_element(choice->costs.begin(), choice->costs.end()));
  CHECK(std::abs(choice->costs[0] - choice->costs[1]) > 3.0);
}

TEST_CASE("greedy step is the argmin over clusters by traversal cost") {
  Rng rng(31);
  CostParams params;
  params.d_thr = 1e9;
  ViewpointParams vp;
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    VoxelMap m = oracle::random_map(rng, Index3(16, 14, 3), 0.1, 0.3);
    std::vector<std::uint32_t> free;
    for (std::uint32_t i = 0; i < m.size(); ++i)
      if (m.state(i) == CellState::Free) free.push_back(i);
    if (free.empty()) continue;
    const Vec3 agent = m.center(free[rng.range(0, free.size() - 1)]);
    const auto choice = greedy_baseline_step(m, agent, params, vp);
    if (!choice) {
      CHECK(m.frontier_count() == 0);
      continue;
    }
    std::size_t argmin = 0;
    for (std::size_t k = 1; k < choice->costs.size(); ++k)
      if (choice->costs[k] < choice->costs[argmin]) argmin = k;
    CHECK(choice->cluster == argmin);
    CHECK(choice->cost == choice->costs[argmin]);
    if (choice->cost < params.m_inf)
      CHECK(choice->cost == doctest::Approx(traversal_cost(agent, choice->target, m, nullptr, params)).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("a room with nothing hidden finishes at once") {
  const std::string dir = temp_dir("free_room");
  ScenarioConfig c;
  c.generator.reset();
  c.map_file = write_map(dir, std::vector<std::string>(8, std::string(8, '.')), 2);
  c.agents = 1;
  c.starts = {Vec3(2.1, 2.1, 0.6)};
  const RunResult r = run(c);
  CHECK(r.metrics.status == "COMPLETE");
  CHECK(r.metrics.final_coverage == 1.0);
  CHECK(r.metrics.total_path_length < 1.0);
  CHECK(r.metrics.ticks < 20);
}

TEST_CASE("two rooms joined by a corridor are fully covered") {
  const std::string dir = temp_dir("two_rooms");
  std::vector<std::string> rows;
  rows.push_back(std::string(41, '#'));
  for (int y = 1; y < 15; ++y) {
    std::string r(41, '.');
    r[0] = r[40] = '#';
    for (int x = 15; x < 26; ++x) r[x] = (y == 7 || y == 8) ? '.' : '#';
    rows.push_back(r);
  }
  rows.push_back(std::string(41, '#'));
  ScenarioConfig c;
  c.generator.reset();
  c.map_file = write_map(dir, rows, 2);
  c.agents = 2;
  c.starts = {Vec3(2.25, 2.25, 0.5), Vec3(18.25, 5.25, 0.5)};
  c.max_ticks = 6000;
  const RunResult r = run(c);
  CHECK(r.metrics.status == "COMPLETE");
  CHECK(r.metrics.final_coverage == 1.0);
  CHECK(r.metrics.units_pending == 0);
  CHECK(r.metrics.invalid_matches_oracle);
  CHECK(r.metrics.capacity_violations == 0);
  CHECK(r.metrics.agreement_violations == 0);
  REQUIRE(r.metrics.agent_path_length.size() == 2);
  for (double l : r.metrics.agent_path_length) CHECK(l > 1.0);
}

TEST_CASE("every mode finishes a small scene") {
  for (Mode mode : {Mode::Full, Mode::NoCon, Mode::NoGraph, Mode::Greedy}) {
    ScenarioConfig c = small_scene(SceneKind::Cubicle, 2, 3);
    c.mode = mode;
    const RunResult r = run(c);
    INFO(to_string(mode));
    CHECK(r.metrics.status == "COMPLETE");
    CHECK(r.metrics.final_coverage == 1.0);
    CHECK(r.metrics.invalid_matches_oracle);
    CHECK(r.metrics.capacity_violations == 0);
    const auto& cov = r.metrics.coverage;
    CHECK(std::is_sorted(cov.begin(), cov.end()));
  }
}

TEST_CASE("runs are deterministic in the seed") {
  ScenarioConfig c = small_scene(SceneKind::Maze, 3, 8);
  c.network.drop = 0.1;
  const RunResult a = run(c), b = run(c);
  CHECK(a.metrics_csv == b.metrics_csv);
  CHECK(a.trace == b.trace);
  c.seed = 9;
  const RunResult other = run(c);
  CHECK(other.trace != a.trace);
}

TEST_CASE("outputs land on disk and the trace replays") {
  const std::string dir = temp_dir("outputs");
  ScenarioConfig c = small_scene(SceneKind::OpenPlan, 2, 1);
  RunOptions opt;
  opt.out_dir = dir;
  const RunResult r = run(c, opt);
  write_outputs(dir, r);
  for (const char* f : {"metrics.csv", "summary.json", "trace.bin"})
    CHECK(std::filesystem::exists(std::filesystem::path(dir) / f));
  std::ifstream in(dir + "/summary.json");
  const json summary = json::parse(in);
  CHECK(summary.contains("status"));
  const auto entries = read_trace(r.trace);
  REQUIRE_FALSE(entries.empty());
  CHECK(entries.front().kind == TraceKind::Config);
}

TEST_CASE("one ablation cell equals the run it wraps") {
  AblationMatrix m;
  m.base = small_scene(SceneKind::Cubicle, 2, 0);
  m.modes = {Mode::Full};
  m.seeds = {4};
  const auto rows = ablate(m);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].time.size() == 1);
  ScenarioConfig c = m.base;
  c.seed = 4;
  const RunResult r = run(c);
  CHECK(rows[0].time[0] == r.metrics.exploration_time);
  CHECK(rows[0].length[0] == r.metrics.total_path_length);
  CHECK(rows[0].time_std() == 0.0);
  CHECK_FALSE(format_table(rows).empty());
}
