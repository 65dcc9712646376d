#include "mrx/sim.hpp"

#include "mrx/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

namespace mrx {

using nlohmann::json;

nlohmann::json RunMetrics::to_json() const {
  json j;
  j["status"] = status;
  j["diagnostics"] = diagnostics;
  j["mode"] = to_string(mode);
  j["seed"] = seed;
  j["ticks"] = ticks;
  j["exploration_time"] = exploration_time;
  j["total_path_length"] = total_path_length;
  j["agent_path_length"] = agent_path_length;
  j["mean_velocity"] = mean_velocity;
  j["final_coverage"] = final_coverage;
  j["allocation_rounds"] = allocation_rounds;
  j["outcomes"] = {{"finalized", finalized}, {"cancelled", cancelled}, {"timed_out", timed_out}};
  j["messages"] = {{"sent", messages_sent},
                   {"delivered", messages_delivered},
                   {"dropped", messages_dropped},
                   {"bytes", message_bytes}};
  j["solver_seconds"] = solver_seconds;
  j["capacity"] = {{"checked", capacity_checks},
                   {"violations", capacity_violations},
                   {"oversized", oversized_allocations},
                   {"deferred", deferred_allocations}};
  j["agreement_violations"] = agreement_violations;
  j["version_regressions"] = version_regressions;
  j["double_work"] = double_work;
  j["units"] = {{"completed", units_completed}, {"invalid", units_invalid}, {"pending", units_pending}};
  j["invalid_matches_oracle"] = invalid_matches_oracle;
  return j;
}

namespace {

bool scope_resolved(const VoxelMap& map, const GridPartition& part, const UnitRecord& rec) {
  if (terminal(rec.status)) return true;
  UnitScope scope(map, part, rec);
  for (std::uint32_t v : scope.candidates())
    if (map.state(v) == CellState::Unknown && scope.contains(v)) return false;
  return true;
}

/// Best unvisited ring viewpoint of a cluster, else its unvisited frontier
/// voxel nearest the agent.
std::optional<Vec3> cluster_target(const FrontierCluster& c, const VoxelMap& map, const Vec3& agent,
                                   const ViewpointParams& vp, const std::set<std::uint32_t>& visited) {
  std::optional<Viewpoint> best;
  for (const Viewpoint& v : viewpoint_candidates(c, map, vp)) {
    if (visited.count(map.linear(map.voxel_of(v.position)))) continue;
    if (!best || v.covered > best->covered ||
        (v.covered == best->covered && (v.position - agent).norm() < (best->position - agent).norm()))
      best = v;
  }
  if (best) return best->position;
  std::optional<std::uint32_t> near;
  for (std::uint32_t f : c.voxels) {
    if (visited.count(f)) continue;
    if (!near || (map.center(f) - agent).norm() < (map.center(*near) - agent).norm()) near = f;
  }
  if (near) return map.center(*near);
  return std::nullopt;
}

struct RoundMeta {
  bool violation = false;  // a route over capacity that is not a lone oversized task
  bool oversized = false;
  bool deferred = false;
  std::vector<int> members;
  std::map<std::uint16_t, std::vector<UnitRecord>> sent;
};

struct Agent {
  AgentState st;
  VoxelMap map;
  std::unique_ptr<ConnectivityGraph> graph;
  std::vector<std::uint32_t> dirty;
  TaskLedger ledger;
  Participant part;

  // host side
  std::optional<HostRound> round;
  RoundMeta meta;
  Version last_finalized;
  bool has_finalized = false;
  std::uint32_t last_finalized_tick = 0;
  std::vector<int> last_members;
  std::uint32_t retry_after = 0;
  std::uint32_t counter_floor = 0;
  std::map<std::uint16_t, std::map<std::uint64_t, UnitRecord>> believed;

  // what other agents were last allocated, by agent id
  std::map<int, std::pair<std::uint32_t, std::vector<UnitRecord>>> claims;

  // execution
  Version plan_version;
  Version seen_version;
  std::vector<std::uint64_t> tour;
  std::optional<std::uint64_t> target_unit;
  std::vector<Vec3> path;
  std::size_t next_wp = 0;
  std::optional<std::uint32_t> goal_voxel;
  std::uint32_t plan_tick = 0;
  bool plan_now = true;
  std::set<std::uint32_t> visited;
  int yields = 0;
  std::optional<Vec3> sensed_at;  // sensing again from the same pose adds nothing
};

class Sim {
 public:
  Sim(const ScenarioConfig& cfg, const RunOptions& opt)
      : cfg_(cfg),
        opt_(opt),
        truth_(build_truth(cfg)),
        part_(truth_, cfg.cost.grid_edge),
        net_(cfg.network, mix_seed(cfg.seed, 0x4E4554), &log_),
        dirs_(ray_directions(cfg.rays)) {
    const std::vector<Vec3> starts = resolve_starts(cfg, truth_);
    mask_ = explorable_mask(truth_, starts);
    mask_total_ = static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t(1)));
    global_ = VoxelMap(truth_.origin(), truth_.resolution(), truth_.dims());
    agents_.reserve(starts.size());
    for (std::size_t k = 0; k < starts.size(); ++k) {
      auto a = std::make_unique<Agent>();
      a->st.id = static_cast<int>(k);
      a->st.position = starts[k];
      a->st.path_log.push_back(starts[k]);
      a->map = VoxelMap(truth_.origin(), truth_.resolution(), truth_.dims());
      a->ledger = TaskLedger(static_cast<int>(k));
      a->part = Participant(static_cast<int>(k));
      Agent* self = a.get();
      a->part.set_terminal_check(
          [this, self](const UnitRecord& r) { return scope_resolved(self->map, part_, r); });
      agents_.push_back(std::move(a));
    }
    params_ = cfg.cost;
    params_.penalty = cfg.mode != Mode::NoCon;
    if (cfg.mode == Mode::NoGraph || cfg.mode == Mode::Greedy)
      params_.d_thr = std::numeric_limits<double>::infinity();
    vp_.sensor_range = cfg.sensor_range;
    m_.mode = cfg.mode;
    m_.seed = cfg.seed;
    log_.add_text(TraceKind::Config, 0, to_json(cfg).dump());
  }

  RunResult execute();

 private:
  bool graph_mode() const { return cfg_.mode == Mode::Full || cfg_.mode == Mode::NoCon; }
  bool uses_protocol() const { return cfg_.mode != Mode::Greedy; }
  Agent& agent(int id) { return *agents_[static_cast<std::size_t>(id)]; }

  void apply(Agent& a, std::span<const std::uint32_t> changed) {
    if (changed.empty()) return;
    update_frontiers(a.map, changed);
    a.dirty.insert(a.dirty.end(), changed.begin(), changed.end());
  }
  void sense_all(std::uint32_t t);
  void merge_components();
  void refresh_graph(Agent& a);
  void refresh_ledger(Agent& a);
  void send(const std::vector<Message>& msgs, std::uint32_t t) {
    for (const Message& m : msgs) net_.send(m, t);
  }
  bool in_range(int a, int b) const {
    return (agents_[static_cast<std::size_t>(a)]->st.position - agents_[static_cast<std::size_t>(b)]->st.position)
               .norm() <= cfg_.r_comm;
  }
  void deliver(std::uint32_t t);
  void close_round(Agent& h, std::uint32_t t);
  void churn(std::uint32_t t);
  void observe_assignments(std::uint32_t t);
  bool owned_unit_resolved(Agent& h);
  void allocate(Agent& h, const std::vector<int>& members, std::uint32_t t);
  void triggers(std::uint32_t t);
  void beacons(std::uint32_t t);
  void check_agreement();
  void plan_tour(Agent& a, std::uint32_t t);
  void replan(Agent& a, std::uint32_t t);
  void set_goal(Agent& a, const Vec3& goal);
  void move_all();
  void record_row(std::uint32_t t);
  void finish(std::uint32_t ticks, bool complete);

  ScenarioConfig cfg_;
  RunOptions opt_;
  VoxelMap truth_;
  GridPartition part_;
  TraceLog log_;
  Network net_;
  std::vector<Vec3> dirs_;
  std::vector<std::unique_ptr<Agent>> agents_;
  VoxelMap global_;
  std::vector<std::uint8_t> mask_;
  std::size_t mask_total_ = 0, mask_known_ = 0;
  CostParams params_;
  ViewpointParams vp_;
  std::vector<std::vector<int>> comps_;
  std::vector<int> host_of_;
  std::vector<std::vector<int>> prev_comps_;
  RunMetrics m_;
  std::ostringstream csv_;
};

void Sim::sense_all(std::uint32_t t) {
  for (auto& ap : agents_) {
    Agent& a = *ap;
    if (a.sensed_at && *a.sensed_at == a.st.position) continue;
    a.sensed_at = a.st.position;
    const MapDelta d = sense(truth_, a.map, a.st, cfg_.sensor_range, dirs_, t);
    apply(a, merge_deltas(a.map, d));
    const auto changed = merge_deltas(global_, d);
    for (std::uint32_t i : changed)
      if (mask_[i]) ++mask_known_;
    update_frontiers(global_, changed);
  }
}

void Sim::merge_components() {
  std::vector<Vec3> pos;
  std::vector<int> ids;
  for (auto& a : agents_) {
    pos.push_back(a->st.position);
    ids.push_back(a->st.id);
  }
  prev_comps_ = comps_;
  comps_ = components(pos, ids, cfg_.r_comm);
  host_of_ = elect_host(pos, ids, cfg_.r_comm);
  for (const auto& c : comps_) {
    if (c.size() < 2) continue;
    std::vector<CellState> u = agent(c[0]).map.cells();
    for (std::size_t k = 1; k < c.size(); ++k) {
      const auto& cells = agent(c[k]).map.cells();
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (u[i] == CellState::Unknown) u[i] = cells[i];
        else if (cells[i] == CellState::Occupied) u[i] = CellState::Occupied;
      }
    }
    for (int id : c) {
      Agent& a = agent(id);
      std::vector<std::uint32_t> changed;
      for (std::uint32_t i = 0; i < u.size(); ++i)
        if (a.map.state(i) != u[i]) {
          a.map.set_state(i, u[i]);
          changed.push_back(i);
        }
      apply(a, changed);
    }
  }
}

void Sim::refresh_graph(Agent& a) {
  if (!graph_mode()) return;
  if (!a.graph) {
    a.graph = std::make_unique<ConnectivityGraph>(a.map, cfg_.cost.grid_edge);
    a.dirty.clear();
    return;
  }
  if (a.dirty.empty()) return;
  const auto grids = dirty_grids(part_, a.dirty);
  a.graph->update(a.map, grids);
  a.dirty.clear();
}

void Sim::refresh_ledger(Agent& a) {
  if (graph_mode()) {
    refresh_graph(a);
    derive_units(*a.graph, a.map, a.ledger);
    mark_invalid(*a.graph, a.ledger);
  } else {
    derive_grid_units(a.map, part_, a.ledger);
  }
}

void Sim::deliver(std::uint32_t t) {
  const auto msgs = net_.deliver(t, [this](int a, int b) { return in_range(a, b); });
  for (const Message& msg : msgs) {
    if (msg.recipient >= agents_.size()) continue;
    Agent& r = agent(msg.recipient);
    if (msg.kind == MsgKind::Accept || msg.kind == MsgKind::Reject || msg.kind == MsgKind::Ack) {
      if (r.round && !r.round->done()) {
        send(r.round->on_message(msg, t), t);
        close_round(r, t);
      }
    } else {
      send(r.part.on_message(msg), t);
    }
  }
}

void Sim::close_round(Agent& h, std::uint32_t t) {
  if (!h.round || !h.round->done()) return;
  const HostRound& r = *h.round;
  for (std::uint16_t p : r.accepted()) {
    auto it = h.meta.sent.find(p);
    if (it == h.meta.sent.end()) continue;
    for (const auto& rec : it->second) h.believed[p][rec.id] = rec;
  }
  h.counter_floor = std::max({h.counter_floor, r.reported_counter(), r.version().counter});
  std::ostringstream s;
  s << "host " << h.st.id << " round " << r.version().str() << ' ' << to_string(r.outcome());
  log_.add_text(TraceKind::Outcome, t, s.str());
  switch (r.outcome()) {
    case Outcome::Finalized:
      ++m_.finalized;
      h.last_finalized = r.version();
      h.has_finalized = true;
      h.last_finalized_tick = t;
      h.last_members = h.meta.members;
      ++m_.capacity_checks;
      if (h.meta.oversized) ++m_.oversized_allocations;
      if (h.meta.violation) {
        ++m_.capacity_violations;
        if (h.meta.deferred) ++m_.deferred_allocations;
      }
      break;
    case Outcome::Cancelled:
      ++m_.cancelled;
      h.retry_after = t + 5;
      break;
    default:
      ++m_.timed_out;
      h.retry_after = t + 5;
  }
  h.round.reset();
}

void Sim::churn(std::uint32_t t) {
  for (auto& ap : agents_) {
    Agent& h = *ap;
    if (!h.round) continue;
    bool keep = host_of_[static_cast<std::size_t>(h.st.id)] == h.st.id;
    for (std::uint16_t p : h.round->participants())
      keep = keep && host_of_[p] == h.st.id;
    if (keep) continue;
    send(h.round->abort(t), t);
    close_round(h, t);
  }
}

void Sim::observe_assignments(std::uint32_t t) {
  for (auto& ap : agents_) {
    Agent& a = *ap;
    const Version& v = a.part.active_version();
    if (v == a.seen_version) continue;
    if (v < a.seen_version) ++m_.version_regressions;
    a.seen_version = v;
    for (const auto& [agent_id, seq] : a.part.roster()) {
      if (agent_id == a.st.id) continue;
      std::vector<UnitRecord> recs;
      for (std::uint64_t id : seq)
        if (auto it = a.part.records().find(id); it != a.part.records().end()) recs.push_back(it->second);
      a.claims[agent_id] = {t, std::move(recs)};
    }
    a.plan_now = true;
  }
}

bool Sim::owned_unit_resolved(Agent& h) {
  for (const auto& [agent_id, seq] : h.part.roster())
    for (std::uint64_t id : seq) {
      auto it = h.part.records().find(id);
      if (it != h.part.records().end() && scope_resolved(h.map, part_, it->second)) return true;
    }
  return false;
}

void Sim::allocate(Agent& h, const std::vector<int>& members, std::uint32_t t) {
  refresh_ledger(h);

  // Units another agent outside this component was recently given.
  std::vector<std::uint64_t> exclude;
  for (const auto& [owner, claim] : h.claims) {
    if (std::find(members.begin(), members.end(), owner) != members.end()) continue;
    if (t - claim.first > cfg_.claim_ticks) continue;
    for (const UnitRecord& rec : claim.second) {
      UnitScope scope(h.map, part_, rec);
      for (const auto& [id, u] : h.ledger.units()) {
        if (terminal(u.rec.status) || !h.map.contains(u.rec.anchor)) continue;
        if (scope.contains(h.map.linear(h.map.voxel_of(u.rec.anchor)))) exclude.push_back(id);
      }
    }
  }
  std::sort(exclude.begin(), exclude.end());
  exclude.erase(std::unique(exclude.begin(), exclude.end()), exclude.end());
  std::vector<TaskSlot> tasks = pending_tasks(h.ledger, exclude);

  bool all_idle = true;
  for (int id : members) {
    const auto& seq = agent(id).part.active().sequence;
    all_idle = all_idle && seq.empty() && !agent(id).part.pending();
  }
  if (tasks.empty() && all_idle) {
    h.retry_after = t + 5;
    return;
  }

  std::vector<AgentSlot> slots;
  for (int id : members) slots.push_back({id, agent(id).st.position});
  const auto t0 = std::chrono::steady_clock::now();
  const ConnectivityGraph* graph = graph_mode() ? h.graph.get() : nullptr;
  AllocationProblem problem = build_problem(slots, tasks, h.map, graph, params_);
  if (!graph_mode()) {
    // A grid centroid can sit in unknown space nobody can reach while the
    // grid still has a frontier; aim such units at the frontier nearest it.
    bool moved = false;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      bool reachable = false;
      for (std::size_t k = 0; k < slots.size(); ++k)
        reachable = reachable || problem.cost(problem.agent_node(k), problem.task_node(i)) < problem.m_inf;
      if (reachable) continue;
      const auto fr = unit_frontiers(h.map, part_, h.ledger.find(tasks[i].id)->rec);
      if (fr.empty()) continue;
      const Vec3 c = tasks[i].anchor;
      const auto near = std::min_element(fr.begin(), fr.end(), [&](std::uint32_t x, std::uint32_t y) {
        return (h.map.center(x) - c).squaredNorm() < (h.map.center(y) - c).squaredNorm();
      });
      tasks[i].anchor = h.map.center(*near);
      moved = true;
    }
    if (moved) problem = build_problem(slots, tasks, h.map, graph, params_);
  }
  const AllocationResult res = solve(problem, mix_seed(cfg_.seed, m_.allocation_rounds));
  m_.solver_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++m_.allocation_rounds;

  RoundMeta meta;
  meta.members = members;
  meta.oversized = res.oversized;
  meta.deferred = !res.deferred.empty();
  for (std::size_t k = 0; k < res.routes.size(); ++k) {
    double load = 0.0;
    for (int i : res.routes[k]) load += problem.tasks[static_cast<std::size_t>(i)].demand;
    const bool lone_oversized =
        res.routes[k].size() == 1 && load > problem.capacity + 1e-9;
    if (load > problem.capacity + 1e-9 && !lone_oversized) meta.violation = true;
  }

  std::map<std::uint16_t, std::vector<std::uint64_t>> sequences;
  std::vector<UnitRecord> records;
  for (std::size_t k = 0; k < members.size(); ++k) {
    sequences[static_cast<std::uint16_t>(members[k])] = res.sequences[k];
    for (std::uint64_t id : res.sequences[k]) {
      UnitRecord rec = h.ledger.find(id)->rec;
      rec.owner = members[k];
      records.push_back(rec);
    }
  }
  std::map<std::uint16_t, ProposalBody> bodies;
  std::vector<std::uint16_t> ids;
  for (int id : members) {
    const auto p = static_cast<std::uint16_t>(id);
    ids.push_back(p);
    ProposalBody b{h.last_finalized, sequences, {}};
    auto& known = h.believed[p];
    for (const UnitRecord& rec : records) {
      auto it = known.find(rec.id);
      if (it == known.end() || !(it->second == rec)) b.records.push_back(rec);
    }
    meta.sent[p] = b.records;
    bodies[p] = std::move(b);
  }
  const std::uint32_t counter =
      std::max({h.part.max_counter_seen(), h.counter_floor, h.last_finalized.counter}) + 1;
  const Version v{counter, t, static_cast<std::uint16_t>(h.st.id)};
  std::ostringstream s;
  s << "alloc host " << h.st.id << " version " << v.str() << " tasks " << tasks.size() << " cost "
    << std::setprecision(9) << res.total_cost;
  log_.add_text(TraceKind::Plan, t, s.str());
  h.meta = std::move(meta);
  h.round.emplace(static_cast<std::uint16_t>(h.st.id), v, ids, std::move(bodies), cfg_.retry);
  send(h.round->start(t), t);
}

void Sim::triggers(std::uint32_t t) {
  for (const auto& c : comps_) {
    const int hid = host_of_[static_cast<std::size_t>(c[0])];
    Agent& h = agent(hid);
    if (h.round || t < h.retry_after) continue;
    std::vector<int> members = c;
    std::sort(members.begin(), members.end());
    const bool fire = !h.has_finalized || members != h.last_members ||
                      t - h.last_finalized_tick >= cfg_.trigger_ticks || owned_unit_resolved(h);
    if (fire) allocate(h, members, t);
  }
}

void Sim::beacons(std::uint32_t t) {
  if (t % cfg_.beacon_period != 0) return;
  for (const auto& c : comps_) {
    Agent& h = agent(host_of_[static_cast<std::size_t>(c[0])]);
    std::optional<Version> open;
    if (h.round) open = h.round->version();
    for (int id : c)
      net_.send(make_beacon(static_cast<std::uint16_t>(h.st.id), h.last_finalized, open,
                            static_cast<std::uint16_t>(id)),
                t);
  }
}

void Sim::check_agreement() {
  for (const auto& c : comps_) {
    Agent& h = agent(host_of_[static_cast<std::size_t>(c[0])]);
    std::vector<int> members = c;
    std::sort(members.begin(), members.end());
    // only components that have not changed since their last finalized round
    if (!h.has_finalized || members != h.last_members) continue;
    std::optional<Version> seen;
    bool bad = false;
    for (int id : members) {
      const Participant& p = agent(id).part;
      if (p.pending()) continue;
      if (seen && *seen != p.active_version()) bad = true;
      seen = p.active_version();
    }
    if (bad) ++m_.agreement_violations;

    std::set<std::uint64_t> targets;
    for (int id : members) {
      const Agent& a = agent(id);
      if (!a.target_unit || a.part.active_version() != h.last_finalized) continue;
      if (!targets.insert(*a.target_unit).second) ++m_.double_work;
    }
  }
}

void Sim::plan_tour(Agent& a, std::uint32_t t) {
  a.plan_version = a.part.active_version();
  std::vector<TourStop> stops;
  for (std::uint64_t id : a.part.active().sequence)
    if (auto it = a.part.records().find(id); it != a.part.records().end())
      stops.push_back({id, it->second.anchor});
  a.tour.clear();
  if (stops.empty()) return;
  LegPath leg;
  if (graph_mode()) {
    refresh_graph(a);
    leg = [&a](const Vec3& p, const Vec3& q) { return graph_polyline(*a.graph, a.map, p, q); };
  } else {
    leg = [](const Vec3& p, const Vec3& q) -> std::optional<std::vector<Vec3>> {
      return clean_polyline({p, q});
    };
  }
  const GlobalTour tour = plan_global_tour(a.st.position, a.st.velocity, stops, leg, cfg_.limits);
  a.tour = tour.order;
  std::ostringstream s;
  s << "agent " << a.st.id << " version " << a.plan_version.str() << " tour";
  for (std::uint64_t id : a.tour) s << ' ' << id;
  log_.add_text(TraceKind::Plan, t, s.str());
}

void Sim::set_goal(Agent& a, const Vec3& goal) {
  const std::uint32_t from = a.map.linear(a.map.voxel_of(a.st.position));
  const std::uint32_t to = a.map.linear(a.map.voxel_of(goal));
  a.goal_voxel = to;
  std::vector<std::uint32_t> cells;
  const auto free = [&a](std::uint32_t i) { return a.map.state(i) == CellState::Free; };
  if (!voxel_astar(a.map, from, to, free, &cells)) {
    a.visited.insert(to);
    a.path.clear();
    return;
  }
  a.path.clear();
  a.path.push_back(a.st.position);
  for (std::size_t i = 1; i < cells.size(); ++i) a.path.push_back(a.map.center(cells[i]));
  if (cells.size() == 1) a.path.push_back(a.map.center(cells[0]));
  a.path = clean_polyline(std::move(a.path));
  a.next_wp = 1;
  if (a.path.size() < 2) {
    a.visited.insert(to);
    a.path.clear();
  }
}

void Sim::replan(Agent& a, std::uint32_t t) {
  a.plan_tick = t;
  a.plan_now = false;
  a.path.clear();
  a.goal_voxel.reset();
  const Vec3 here = a.st.position;

  if (cfg_.mode == Mode::Greedy) {
    a.target_unit.reset();
    const auto choice = greedy_baseline_step(a.map, here, params_, vp_, a.visited);
    a.st.idle = !choice;
    if (choice) set_goal(a, choice->target);
    return;
  }

  if (a.plan_version != a.part.active_version()) plan_tour(a, t);
  a.target_unit.reset();
  std::vector<std::uint32_t> fr;
  std::size_t pos = 0;
  for (; pos < a.tour.size(); ++pos) {
    auto it = a.part.records().find(a.tour[pos]);
    if (it == a.part.records().end()) continue;
    fr = unit_frontiers(a.map, part_, it->second);
    if (!fr.empty()) break;
  }
  if (fr.empty()) {
    a.st.idle = true;
    return;
  }
  a.st.idle = false;
  a.target_unit = a.tour[pos];
  std::optional<Vec3> end;
  if (pos + 1 < a.tour.size())
    if (auto it = a.part.records().find(a.tour[pos + 1]); it != a.part.records().end())
      end = it->second.anchor;

  std::vector<Viewpoint> vps;
  for (const FrontierCluster& c : cluster_frontiers(a.map, fr)) {
    if (auto p = cluster_target(c, a.map, here, vp_, a.visited)) {
      Viewpoint v;
      v.position = *p;
      vps.push_back(v);
    }
  }
  if (vps.empty()) {
    // every candidate was tried; start over on this unit
    a.visited.clear();
    a.plan_now = true;
    return;
  }
  const auto order = plan_local_tour(here, end, vps);
  set_goal(a, vps[order.front()].position);
}

void Sim::move_all() {
  const double step = cfg_.limits.v_max * cfg_.dt;
  std::set<std::uint32_t> reserved;
  for (auto it = agents_.rbegin(); it != agents_.rend(); ++it) {
    Agent& a = **it;
    const Vec3 from = a.st.position;
    Vec3 to = from;
    std::size_t wp = a.next_wp;
    if (!a.path.empty()) {
      double left = step;
      while (wp < a.path.size() && left > 0.0) {
        const Vec3 d = a.path[wp] - to;
        const double len = d.norm();
        if (len <= left) {
          to = a.path[wp];
          left -= len;
          ++wp;
        } else {
          to += d * (left / len);
          left = 0.0;
        }
      }
    }
    const std::uint32_t here = a.map.linear(a.map.voxel_of(from));
    const std::uint32_t next = a.map.linear(a.map.voxel_of(to));
    if (next != here && reserved.count(next) && a.yields < 10) {
      ++a.yields;
      to = from;
      wp = a.next_wp;
    } else {
      a.yields = 0;
    }
    reserved.insert(a.map.linear(a.map.voxel_of(to)));
    a.next_wp = wp;
    a.st.velocity = (to - from) / cfg_.dt;
    if (to != from) a.st.record(to);
    a.st.position = to;
    if (!a.path.empty() && a.next_wp >= a.path.size()) {
      if (a.goal_voxel) a.visited.insert(*a.goal_voxel);
      a.path.clear();
      a.plan_now = true;
    }
  }
}

void Sim::record_row(std::uint32_t t) {
  const double cov = mask_total_ ? static_cast<double>(mask_known_) / static_cast<double>(mask_total_) : 1.0;
  m_.coverage.push_back(cov);
  csv_ << t << ',' << std::fixed << std::setprecision(6) << t * cfg_.dt << ',' << cov;
  for (auto& a : agents_)
    csv_ << ',' << a->st.position.x() << ',' << a->st.position.y() << ',' << a->st.position.z() << ','
         << a->st.velocity.norm();
  csv_ << '\n';
  csv_.unsetf(std::ios::floatfield);
}

void Sim::finish(std::uint32_t ticks, bool complete) {
  m_.status = complete ? "COMPLETE" : "INCOMPLETE";
  m_.ticks = ticks;
  m_.exploration_time = ticks * cfg_.dt;
  for (auto& a : agents_) {
    m_.agent_path_length.push_back(a->st.distance_traveled);
    m_.total_path_length += a->st.distance_traveled;
  }
  m_.mean_velocity = m_.exploration_time > 0.0
                         ? m_.total_path_length / (static_cast<double>(agents_.size()) * m_.exploration_time)
                         : 0.0;
  m_.final_coverage = m_.coverage.empty() ? 0.0 : m_.coverage.back();
  m_.messages_sent = net_.sent();
  m_.messages_delivered = net_.delivered();
  m_.messages_dropped = net_.dropped();
  m_.message_bytes = net_.bytes();

  // Final task picture from the union of everything sensed.
  ConnectivityGraph g(global_, cfg_.cost.grid_edge);
  TaskLedger ledger(0);
  derive_units(g, global_, ledger);
  mark_invalid(g, ledger);
  std::vector<std::uint8_t> invalid(global_.size(), 0);
  for (const auto& [id, u] : ledger.units()) {
    switch (u.rec.status) {
      case UnitStatus::Completed: break;
      case UnitStatus::Invalid:
        ++m_.units_invalid;
        for (std::uint32_t v : u.members) invalid[v] = 1;
        break;
      case UnitStatus::Pending: ++m_.units_pending; break;
    }
  }
  // The final picture only has units for what is still unknown; finished
  // units live in the agents' own ledgers.
  for (auto& a : agents_) {
    refresh_ledger(*a);
    for (const auto& [id, u] : a->ledger.units()) m_.units_completed += u.rec.status == UnitStatus::Completed;
  }
  std::vector<std::uint32_t> seeds;
  for (std::uint32_t i = 0; i < global_.size(); ++i)
    if (global_.state(i) == CellState::Free) seeds.push_back(i);
  const auto reach = flood_fill(global_, seeds, [this](std::uint32_t i) {
    return global_.state(i) != CellState::Occupied;
  });
  bool match = true;
  for (std::uint32_t i = 0; i < global_.size() && match; ++i)
    if (global_.state(i) == CellState::Unknown) match = (invalid[i] != 0) == (reach[i] == 0);
  m_.invalid_matches_oracle = match;

  if (!complete) {
    std::ostringstream s;
    s << "tick cap reached with " << global_.frontier_count() << " frontier voxels and "
      << m_.units_pending << " pending units";
    m_.diagnostics = s.str();
  }

  if (!opt_.out_dir.empty() && opt_.graph_dumps) {
    const std::filesystem::path dir = std::filesystem::path(opt_.out_dir) / "graphs";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "final.txt") << [&] {
      std::ostringstream s;
      g.dump(s);
      return s.str();
    }();
    for (auto& a : agents_) {
      if (!graph_mode()) break;
      refresh_graph(*a);
      std::ofstream out(dir / ("agent_" + std::to_string(a->st.id) + ".txt"));
      a->graph->dump(out);
    }
  }
}

RunResult Sim::execute() {
  csv_ << "tick,time,coverage";
  for (auto& a : agents_) {
    const std::string p = "a" + std::to_string(a->st.id) + "_";
    csv_ << ',' << p << "x," << p << "y," << p << "z," << p << "speed";
  }
  csv_ << '\n';

  bool complete = false;
  std::uint32_t t = 0;
  for (; t < cfg_.max_ticks; ++t) {
    sense_all(t);
    merge_components();
    if (global_.frontier_count() == 0) {
      complete = true;
      record_row(t);
      break;
    }
    if (uses_protocol()) {
      deliver(t);
      for (auto& a : agents_)
        if (a->round) {
          send(a->round->on_tick(t), t);
          close_round(*a, t);
        }
      churn(t);
      observe_assignments(t);
      triggers(t);
      beacons(t);
      check_agreement();
    }
    for (auto& a : agents_)
      if (a->plan_now || a->path.empty() || t - a->plan_tick >= cfg_.replan_ticks) replan(*a, t);
    move_all();
    record_row(t);
  }
  finish(t, complete);

  RunResult out;
  out.metrics = m_;
  out.metrics_csv = csv_.str();
  out.trace = log_.bytes();
  if (!opt_.out_dir.empty()) {
    write_outputs(opt_.out_dir, out);
    log_.save((std::filesystem::path(opt_.out_dir) / "trace.bin").string());
  }
  return out;
}

}  // namespace

RunResult run(const ScenarioConfig& config, const RunOptions& options) {
  config.validate();
  Sim sim(config, options);
  return sim.execute();
}

void write_outputs(const std::string& dir, const RunResult& r) {
  std::filesystem::create_directories(dir);
  std::ofstream(std::filesystem::path(dir) / "metrics.csv") << r.metrics_csv;
  std::ofstream(std::filesystem::path(dir) / "summary.json") << r.metrics.to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::optional<GreedyChoice> greedy_baseline_step(const VoxelMap& map, const Vec3& agent,
                                                 const CostParams& params, const ViewpointParams& vp,
                                                 const std::set<std::uint32_t>& visited) {
  const auto fr = map.frontiers();
  if (fr.empty()) return std::nullopt;
  const auto clusters = cluster_frontiers(map, fr);
  std::vector<std::optional<Vec3>> targets;
  for (const auto& c : clusters) targets.push_back(cluster_target(c, map, agent, vp, visited));

  // One search from the agent prices every target; it equals traversal_cost
  // on the voxel branch because both snap endpoints the same way.
  std::map<std::uint32_t, double> dist;
  std::set<std::uint32_t> wanted;
  std::vector<std::optional<std::uint32_t>> snapped;
  for (const auto& p : targets) {
    snapped.push_back(p ? passable_voxel_near(map, *p) : std::nullopt);
    if (snapped.back()) wanted.insert(*snapped.back());
  }
  const auto start = passable_voxel_near(map, agent);
  const auto passable = [&map](std::uint32_t i) { return map.state(i) != CellState::Occupied; };
  if (start) {
    std::size_t left = wanted.size();
    voxel_dijkstra(map, *start, passable, std::numeric_limits<double>::infinity(),
                   [&](std::uint32_t i, double d) {
                     if (wanted.count(i)) {
                       dist[i] = d;
                       --left;
                     }
                     return left > 0;
                   });
  }

  GreedyChoice best;
  bool found = false;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    double c = params.m_inf;
    if (snapped[k]) {
      auto it = dist.find(*snapped[k]);
      if (it != dist.end()) c = it->second;
    }
    best.costs.push_back(c);
    if (c < params.m_inf && (!found || c < best.cost)) {
      found = true;
      best.cost = c;
      best.cluster = k;
      best.target = *targets[k];
    }
  }
  if (!found) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------

AblationMatrix load_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("matrix: expected an object");
  const std::string base_dir = std::filesystem::path(path).parent_path().string();
  AblationMatrix m;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "scenario" && it.key() != "modes" && it.key() != "seeds" && it.key() != "r_comm")
      throw ConfigError("matrix: unknown key '" + it.key() + "'");
  if (!j.contains("scenario")) throw ConfigError("matrix: missing scenario");
  const json& sc = j.at("scenario");
  if (sc.is_string()) {
    std::filesystem::path p = sc.get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    m.base = load_scenario_file(p.string());
  } else {
    m.base = parse_scenario(sc, base_dir);
  }
  if (j.contains("modes")) {
    for (const auto& s : j.at("modes")) {
      const auto mode = parse_mode(s.get<std::string>());
      if (!mode) throw ConfigError("matrix: unknown mode");
      m.modes.push_back(*mode);
    }
  } else {
    m.modes.push_back(m.base.mode);
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (s.is_number_unsigned()) {
      for (std::uint64_t k = 0; k < s.get<std::uint64_t>(); ++k) m.seeds.push_back(k);
    } else {
      for (const auto& v : s) m.seeds.push_back(v.get<std::uint64_t>());
    }
  } else {
    m.seeds.push_back(m.base.seed);
  }
  if (j.contains("r_comm"))
    for (const auto& v : j.at("r_comm"))
      m.r_comm.push_back(v.is_string() && v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                        : v.get<double>());
  return m;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string r_label(double r) {
  if (std::isinf(r)) return "inf";
  std::ostringstream s;
  s << r;
  return s.str();
}

}  // namespace

double AblationRow::time_mean() const { return mean_of(time); }
double AblationRow::time_std() const { return std_of(time); }
double AblationRow::length_mean() const { return mean_of(length); }
double AblationRow::length_std() const { return std_of(length); }

std::vector<AblationRow> ablate(const AblationMatrix& m, const std::string& out_dir) {
  std::vector<double> ranges = m.r_comm;
  if (ranges.empty()) ranges.push_back(m.base.r_comm);
  std::vector<AblationRow> rows;
  for (Mode mode : m.modes)
    for (double r : ranges) {
      AblationRow row{mode, r, {}, {}, {}, 0};
      for (std::uint64_t seed : m.seeds) {
        ScenarioConfig c = m.base;
        c.mode = mode;
        c.r_comm = r;
        c.seed = seed;
        RunOptions opt;
        if (!out_dir.empty()) {
          opt.out_dir = (std::filesystem::path(out_dir) /
                         (std::string(to_string(mode)) + "_r" + r_label(r)) / ("seed_" + std::to_string(seed)))
                            .string();
          opt.graph_dumps = false;
        }
        const RunResult res = run(c, opt);
        row.time.push_back(res.metrics.exploration_time);
        row.length.push_back(res.metrics.total_path_length);
        row.seeds.push_back(seed);
        if (res.metrics.status != "COMPLETE") ++row.incomplete;
      }
      rows.push_back(std::move(row));
    }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream md(std::filesystem::path(out_dir) / "ablation.md");
    md << format_table(rows);
    std::ofstream csv(std::filesystem::path(out_dir) / "ablation.csv");
    csv << "mode,r_comm,seed,time,path_length\n";
    for (const auto& row : rows)
      for (std::size_t i = 0; i < row.seeds.size(); ++i)
        csv << to_string(row.mode) << ',' << r_label(row.r_comm) << ',' << row.seeds[i] << ','
            << row.time[i] << ',' << row.length[i] << '\n';
  }
  return rows;
}

std::string format_table(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << "| mode | r_comm | runs | time (s) | path length (m) | incomplete |\n";
  s << "|---|---|---|---|---|---|\n";
  s << std::fixed << std::setprecision(1);
  for (const auto& r : rows)
    s << "| " << to_string(r.mode) << " | " << r_label(r.r_comm) << " | " << r.time.size() << " | "
      << r.time_mean() << " ± " << r.time_std() << " | " << r.length_mean() << " ± " << r.length_std()
      << " | " << r.incomplete << (r.incomplete ? " INCOMPLETE" : "") << " |\n";
  return s.str();
}

}  // namespace mrx
