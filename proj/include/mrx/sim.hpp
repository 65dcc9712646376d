#pragma once

#include "mrx/allocation.hpp"
#include "mrx/cp_planner.hpp"
#include "mrx/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mrx {

struct RunMetrics {
  std::string status = "INCOMPLETE";  // or COMPLETE
  std::string diagnostics;
  Mode mode = Mode::Full;
  std::uint64_t seed = 0;
  std::uint32_t ticks = 0;
  double exploration_time = 0.0;
  double total_path_length = 0.0;
  std::vector<double> agent_path_length;
  double mean_velocity = 0.0;
  double final_coverage = 0.0;
  std::vector<double> coverage;  // per tick

  std::size_t allocation_rounds = 0;
  std::size_t finalized = 0, cancelled = 0, timed_out = 0;
  std::uint64_t messages_sent = 0, messages_delivered = 0, messages_dropped = 0, message_bytes = 0;
  double solver_seconds = 0.0;

  std::size_t capacity_checks = 0;      // finalized allocations checked
  std::size_t capacity_violations = 0;  // over capacity without an oversized flag
  std::size_t oversized_allocations = 0;
  std::size_t deferred_allocations = 0;  // some tasks held back, no packing under Q
  std::size_t agreement_violations = 0;
  std::size_t version_regressions = 0;
  std::size_t double_work = 0;

  // completed: summed over the agents' ledgers; invalid and pending: the
  // final merged map
  std::size_t units_completed = 0, units_invalid = 0, units_pending = 0;
  bool invalid_matches_oracle = false;

  nlohmann::json to_json() const;
};

struct RunOptions {
  std::string out_dir;  // empty: keep everything in memory
  bool graph_dumps = true;
};

struct RunResult {
  RunMetrics metrics;
  std::string metrics_csv;
  std::vector<std::uint8_t> trace;  // body of the trace file
};

/// Runs one scenario to termination or the tick cap. Deterministic in the
/// config, including the seed.
RunResult run(const ScenarioConfig& config, const RunOptions& options = {});

/// Writes metrics.csv, summary.json, trace.bin into dir.
void write_outputs(const std::string& dir, const RunResult& r);

struct GreedyChoice {
  Vec3 target = Vec3::Zero();
  std::size_t cluster = 0;
  double cost = 0.0;
  std::vector<double> costs;  // per cluster, m_inf when unreachable
};

/// Nearest frontier-cluster viewpoint by traversal cost from the agent.
/// Targets whose voxel is in `visited` are skipped; a cluster without a
/// viewpoint falls back to its frontier voxel nearest the agent.
std::optional<GreedyChoice> greedy_baseline_step(const VoxelMap& map, const Vec3& agent,
                                                 const CostParams& params,
                                                 const ViewpointParams& vp,
                                                 const std::set<std::uint32_t>& visited = {});

struct AblationMatrix {
  ScenarioConfig base;
  std::vector<Mode> modes;
  std::vector<std::uint64_t> seeds;
  std::vector<double> r_comm;  // empty: base value only
};

AblationMatrix load_matrix_file(const std::string& path);

struct AblationRow {
  Mode mode;
  double r_comm;
  std::vector<double> time, length;
  std::vector<std::uint64_t> seeds;
  std::size_t incomplete = 0;
  double time_mean() const;
  double time_std() const;
  double length_mean() const;
  double length_std() const;
};

/// Runs every (mode, r_comm, seed) combination. With out_dir set, each run
/// writes into its own subdirectory and the table goes to ablation.csv / .md.
std::vector<AblationRow> ablate(const AblationMatrix& m, const std::string& out_dir = "");
std::string format_table(const std::vector<AblationRow>& rows);

}  // namespace mrx
