#pragma once

#include "mrx/allocation.hpp"
#include "mrx/cp_planner.hpp"
#include "mrx/dispatch.hpp"
#include "mrx/scenes.hpp"
#include "mrx/voxel_map.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrx {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { Full, NoCon, NoGraph, Greedy };
std::optional<Mode> parse_mode(const std::string& s);
const char* to_string(Mode m);

struct ScenarioConfig {
  std::string name = "scenario";
  // map source: a generator or a text map file
  std::optional<SceneKind> generator = SceneKind::OpenPlan;
  std::optional<std::uint64_t> map_seed;  // defaults to the run seed
  std::string map_file;
  Vec3 size = Vec3(30.0, 30.0, 3.0);
  double resolution = 0.5;

  int agents = 1;
  std::vector<Vec3> starts;  // empty: packed launch positions
  double r_comm = 5.0;       // infinity allowed
  MotionLimits limits;
  CostParams cost;
  double sensor_range = 10.0;
  RaySpec rays;
  NetworkParams network;
  double dt = 0.1;
  Mode mode = Mode::Full;
  std::uint64_t seed = 0;
  std::uint32_t max_ticks = 10000;

  std::uint32_t trigger_ticks = 20;
  std::uint32_t claim_ticks = 300;
  std::uint32_t beacon_period = 10;
  std::uint32_t replan_ticks = 10;
  RetryPolicy retry;

  void validate() const;
};

/// Strict parse: unknown keys anywhere are rejected. Relative map files are
/// resolved against base_dir.
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::string& base_dir = "");
ScenarioConfig load_scenario_file(const std::string& path);
nlohmann::json to_json(const ScenarioConfig& c);

/// Ground truth and launch positions for a config.
VoxelMap build_truth(const ScenarioConfig& c);
std::vector<Vec3> resolve_starts(const ScenarioConfig& c, const VoxelMap& truth);

}  // namespace mrx
