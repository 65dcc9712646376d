#include "mrx/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace mrx {

using nlohmann::json;

std::optional<Mode> parse_mode(const std::string& s) {
  if (s == "full") return Mode::Full;
  if (s == "no-con") return Mode::NoCon;
  if (s == "no-graph") return Mode::NoGraph;
  if (s == "greedy") return Mode::Greedy;
  return std::nullopt;
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::NoCon: return "no-con";
    case Mode::NoGraph: return "no-graph";
    case Mode::Greedy: return "greedy";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  if (agents < 1 || agents > 64) throw ConfigError("agents must be in [1, 64]");
  if (!starts.empty() && static_cast<int>(starts.size()) != agents)
    throw ConfigError("starts must list one position per agent");
  if (!(r_comm > 0.0)) throw ConfigError("r_comm must be positive");
  if (!(resolution > 0.0)) throw ConfigError("resolution must be positive");
  if (!(size.minCoeff() > 0.0)) throw ConfigError("size must be positive");
  if (!(sensor_range > 0.0)) throw ConfigError("sensor range must be positive");
  if (!(rays.azimuth_step_deg > 0.0) || !(rays.elevation_step_deg > 0.0))
    throw ConfigError("ray steps must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (network.drop < 0.0 || network.drop >= 1.0) throw ConfigError("drop must be in [0, 1)");
  if (network.duplicate < 0.0 || network.duplicate > 1.0) throw ConfigError("duplicate must be in [0, 1]");
  if (network.delay_min < 1 || network.delay_max < network.delay_min)
    throw ConfigError("need 1 <= delay_min <= delay_max");
  if (max_ticks < 1 || trigger_ticks < 1 || beacon_period < 1 || replan_ticks < 1)
    throw ConfigError("tick counts must be positive");
  if (retry.base_timeout < 1 || retry.factor < 1) throw ConfigError("bad retry policy");
  if (!generator && map_file.empty()) throw ConfigError("map needs a generator or a file");
  try {
    limits.validate();
    cost.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

namespace {

// Reads keys from one JSON object and rejects whatever was not read.
class Strict {
 public:
  Strict(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Strict() noexcept(false) {
    if (std::uncaught_exceptions() == 0) finish();
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k);
  }
  const json& at(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }
  template <typename T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + k + ": wrong type");
    }
  }
  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected numbers");
  }
}

double maybe_inf(const json& j, const std::string& where) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw ConfigError(where + ": expected a number or \"inf\"");
  return j.get<double>();
}

json inf_or(double v) { return std::isinf(v) ? json("inf") : json(v); }

}  // namespace

ScenarioConfig parse_scenario(const json& j, const std::string& base_dir) {
  ScenarioConfig c;
  {
    Strict s(j, "scenario");
    s.get("name", c.name);
    if (s.has("map")) {
      Strict m(s.at("map"), "map");
      if (m.has("generator")) {
        const auto kind = parse_scene_kind(m.at("generator").get<std::string>());
        if (!kind) throw ConfigError("map.generator: unknown generator");
        c.generator = kind;
      }
      if (m.has("file")) {
        if (m.has("generator")) throw ConfigError("map: give either generator or file");
        c.generator.reset();
        std::filesystem::path p = m.at("file").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        c.map_file = p.string();
      }
      if (m.has("seed")) c.map_seed = m.at("seed").get<std::uint64_t>();
      if (m.has("size")) c.size = vec3(m.at("size"), "map.size");
      m.get("resolution", c.resolution);
    }
    s.get("agents", c.agents);
    if (s.has("starts")) {
      const json& a = s.at("starts");
      if (!a.is_array()) throw ConfigError("starts: expected a list");
      for (const auto& p : a) c.starts.push_back(vec3(p, "starts"));
    }
    if (s.has("r_comm")) c.r_comm = maybe_inf(s.at("r_comm"), "r_comm");
    if (s.has("limits")) {
      Strict l(s.at("limits"), "limits");
      l.get("v_max", c.limits.v_max);
      l.get("omega_max", c.limits.omega_max);
      l.get("a_max", c.limits.a_max);
    }
    if (s.has("params")) {
      Strict p(s.at("params"), "params");
      p.get("sigma_q", c.cost.sigma_q);
      p.get("lambda_c", c.cost.lambda_c);
      p.get("grid_edge", c.cost.grid_edge);
      if (p.has("d_thr")) c.cost.d_thr = maybe_inf(p.at("d_thr"), "params.d_thr");
    }
    if (s.has("sensor")) {
      Strict p(s.at("sensor"), "sensor");
      p.get("range", c.sensor_range);
      p.get("azimuth_step_deg", c.rays.azimuth_step_deg);
      p.get("elevation_step_deg", c.rays.elevation_step_deg);
    }
    if (s.has("network")) {
      Strict n(s.at("network"), "network");
      n.get("drop", c.network.drop);
      n.get("duplicate", c.network.duplicate);
      n.get("delay_min", c.network.delay_min);
      n.get("delay_max", c.network.delay_max);
      n.get("reorder", c.network.reorder);
    }
    s.get("dt", c.dt);
    if (s.has("mode")) {
      const auto m = parse_mode(s.at("mode").get<std::string>());
      if (!m) throw ConfigError("mode: expected full, no-con, no-graph or greedy");
      c.mode = *m;
    }
    s.get("seed", c.seed);
    s.get("max_ticks", c.max_ticks);
    if (s.has("dispatch")) {
      Strict d(s.at("dispatch"), "dispatch");
      d.get("trigger_ticks", c.trigger_ticks);
      d.get("claim_ticks", c.claim_ticks);
      d.get("beacon_period", c.beacon_period);
      d.get("replan_ticks", c.replan_ticks);
      d.get("base_timeout", c.retry.base_timeout);
      d.get("backoff", c.retry.factor);
      d.get("max_retries", c.retry.max_retries);
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_scenario(j, std::filesystem::path(path).parent_path().string());
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  json m;
  if (c.generator) m["generator"] = to_string(*c.generator);
  else m["file"] = c.map_file;
  if (c.map_seed) m["seed"] = *c.map_seed;
  m["size"] = {c.size.x(), c.size.y(), c.size.z()};
  m["resolution"] = c.resolution;
  j["map"] = m;
  j["agents"] = c.agents;
  if (!c.starts.empty()) {
    json s = json::array();
    for (const Vec3& p : c.starts) s.push_back({p.x(), p.y(), p.z()});
    j["starts"] = s;
  }
  j["r_comm"] = inf_or(c.r_comm);
  j["limits"] = {{"v_max", c.limits.v_max}, {"omega_max", c.limits.omega_max}, {"a_max", c.limits.a_max}};
  j["params"] = {{"sigma_q", c.cost.sigma_q},
                 {"lambda_c", c.cost.lambda_c},
                 {"grid_edge", c.cost.grid_edge},
                 {"d_thr", inf_or(c.cost.d_thr)}};
  j["sensor"] = {{"range", c.sensor_range},
                 {"azimuth_step_deg", c.rays.azimuth_step_deg},
                 {"elevation_step_deg", c.rays.elevation_step_deg}};
  j["network"] = {{"drop", c.network.drop},
                  {"duplicate", c.network.duplicate},
                  {"delay_min", c.network.delay_min},
                  {"delay_max", c.network.delay_max},
                  {"reorder", c.network.reorder}};
  j["dt"] = c.dt;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  j["max_ticks"] = c.max_ticks;
  j["dispatch"] = {{"trigger_ticks", c.trigger_ticks}, {"claim_ticks", c.claim_ticks},
                   {"beacon_period", c.beacon_period}, {"replan_ticks", c.replan_ticks},
                   {"base_timeout", c.retry.base_timeout}, {"backoff", c.retry.factor},
                   {"max_retries", c.retry.max_retries}};
  return j;
}

VoxelMap build_truth(const ScenarioConfig& c) {
  if (!c.generator) return load_text_map_file(c.map_file);
  SceneSpec spec;
  spec.kind = *c.generator;
  spec.size = c.size;
  spec.resolution = c.resolution;
  spec.seed = c.map_seed.value_or(c.seed);
  return generate_scene(spec);
}

std::vector<Vec3> resolve_starts(const ScenarioConfig& c, const VoxelMap& truth) {
  std::vector<Vec3> starts = c.starts.empty() ? default_starts(truth, c.agents) : c.starts;
  for (const Vec3& p : starts) {
    if (!truth.contains(p)) throw ConfigError("start position outside the map");
    if (truth.state(truth.voxel_of(p)) != CellState::Free)
      throw ConfigError("start position is not in free space");
  }
  return starts;
}

}  // namespace mrx
