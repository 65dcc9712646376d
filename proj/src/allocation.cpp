#include "mrx/allocation.hpp"

#include "mrx/rng.hpp"
#include "mrx/search.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace mrx {

void CostParams::validate() const {
  if (!(sigma_q >= 1.0)) throw AllocationError("sigma_q must be >= 1");
  if (!(lambda_c >= 1.0)) throw AllocationError("lambda_c must be >= 1");
  if (!(grid_edge > 0.0)) throw AllocationError("grid edge must be positive");
  if (!(d_thr > 0.0)) throw AllocationError("d_thr must be positive");
  if (!(m_inf > 0.0)) throw AllocationError("m_inf must be positive");
}

double AllocationProblem::workload() const {
  double w = 0.0;
  for (const auto& t : tasks) w += t.demand;
  return w;
}

std::optional<std::uint32_t> passable_voxel_near(const VoxelMap& map, const Vec3& p) {
  const Index3 hi = (map.dims().array() - 1).matrix();
  const Index3 v = map.voxel_of(p).cwiseMax(Index3::Zero()).cwiseMin(hi);
  if (map.state(v) != CellState::Occupied) return map.linear(v);
  for (int r = 1; r <= 4; ++r) {
    std::optional<std::uint32_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          const Index3 n = v + Index3(dx, dy, dz);
          if (!map.in_bounds(n) || map.state(n) == CellState::Occupied) continue;
          const std::uint32_t i = map.linear(n);
          const double d = (map.center(n) - p).squaredNorm();
          if (d < best_d || (d == best_d && i < *best)) {
            best_d = d;
            best = i;
          }
        }
    if (best) return best;
  }
  return std::nullopt;
}

namespace {

bool not_occupied(const VoxelMap& map, std::uint32_t i) {
  return map.state(i) != CellState::Occupied;
}

double graph_leg_cost(const Vec3& a, const Vec3& b, const VoxelMap& map,
                      const ConnectivityGraph& graph) {
  const auto va = graph.nearest_vertex(map, a);
  const auto vb = graph.nearest_vertex(map, b);
  if (!va || !vb) return kUnreachable;
  const double d = graph.distance(*va, *vb);
  if (d == kUnreachable) return kUnreachable;
  return (a - graph.vertex(*va).anchor).norm() + d + (graph.vertex(*vb).anchor - b).norm();
}

}  // namespace

double traversal_cost(const Vec3& a, const Vec3& b, const VoxelMap& map,
                      const ConnectivityGraph* graph, const CostParams& params) {
  const double euclid = (a - b).norm();
  if (euclid == 0.0) return 0.0;
  if (graph == nullptr || euclid < params.d_thr) {
    const auto sa = passable_voxel_near(map, a);
    const auto sb = passable_voxel_near(map, b);
    if (!sa || !sb) return params.m_inf;
    const auto len =
        voxel_astar(map, *sa, *sb, [&](std::uint32_t i) { return not_occupied(map, i); });
    return len ? *len : params.m_inf;
  }
  const double d = graph_leg_cost(a, b, map, *graph);
  return d == kUnreachable ? params.m_inf : d;
}

Eigen::MatrixXd assemble_matrix(const Eigen::MatrixXd& agent_task, const Eigen::MatrixXd& task_task,
                                double m_inf) {
  const Eigen::Index nc = agent_task.rows(), nt = agent_task.cols();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1 + nc + nt, 1 + nc + nt);
  c(0, 0) = m_inf;
  c.block(0, 1 + nc, 1, nt).setConstant(m_inf);
  c.block(1, 1 + nc, nc, nt) = agent_task;
  c.block(1 + nc, 1, nt, nc).setConstant(m_inf);
  c.block(1 + nc, 1 + nc, nt, nt) = task_task;
  return c;
}

AllocationProblem build_problem(const std::vector<AgentSlot>& agents,
                                const std::vector<TaskSlot>& tasks, const VoxelMap& map,
                                const ConnectivityGraph* graph, const CostParams& params) {
  params.validate();
  if (agents.empty()) throw AllocationError("allocation needs at least one agent");
  AllocationProblem p;
  p.agents = agents;
  p.tasks = tasks;
  p.m_inf = params.m_inf;
  const std::size_t nc = agents.size(), nt = tasks.size();
  p.capacity = nt == 0 ? 0.0 : params.sigma_q * p.workload() / static_cast<double>(nc);

  std::vector<Vec3> pos;
  for (const auto& a : agents) pos.push_back(a.position);
  for (const auto& t : tasks) pos.push_back(t.anchor);
  const std::size_t n = pos.size();

  // Raw lengths between every agent/task node pair the cost matrix uses. Each
  // node runs one voxel Dijkstra covering its near partners and one graph
  // search covering its far partners.
  Eigen::MatrixXd len = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                                  static_cast<Eigen::Index>(n), params.m_inf);
  std::vector<std::optional<std::uint32_t>> snap(n);
  std::vector<std::optional<std::uint32_t>> vert(n);
  for (std::size_t i = 0; i < n; ++i) {
    snap[i] = passable_voxel_near(map, pos[i]);
    if (graph) vert[i] = graph->nearest_vertex(map, pos[i]);
  }
  auto needed = [&](std::size_t i, std::size_t j) { return j > i && j >= nc; };
  for (std::size_t i = 0; i < n; ++i) {
    len(i, i) = 0.0;
    std::vector<std::size_t> near, far;
    for (std::size_t j = 0; j < n; ++j) {
      if (!needed(i, j)) continue;
      const double e = (pos[i] - pos[j]).norm();
      if (e == 0.0) len(i, j) = 0.0;
      else if (graph == nullptr || e < params.d_thr) near.push_back(j);
      else far.push_back(j);
    }
    if (!near.empty() && snap[i]) {
      std::vector<std::pair<std::uint32_t, std::size_t>> want;
      for (std::size_t j : near)
        if (snap[j]) want.emplace_back(*snap[j], j);
      std::sort(want.begin(), want.end());
      std::size_t left = want.size();
      voxel_dijkstra(map, *snap[i], [&](std::uint32_t v) { return not_occupied(map, v); },
                     kUnreachable, [&](std::uint32_t v, double d) {
                       auto it = std::lower_bound(want.begin(), want.end(),
                                                  std::pair<std::uint32_t, std::size_t>{v, 0});
                       for (; it != want.end() && it->first == v; ++it) {
                         len(i, it->second) = d;
                         --left;
                       }
                       return left > 0;
                     });
    }
    if (!far.empty() && vert[i]) {
      const PathTree tree = graph->shortest_paths(*vert[i]);
      const double leg_i = (pos[i] - graph->vertex(*vert[i]).anchor).norm();
      for (std::size_t j : far) {
        if (!vert[j] || tree.dist[*vert[j]] == kUnreachable) continue;
        len(i, j) = leg_i + tree.dist[*vert[j]] + (graph->vertex(*vert[j]).anchor - pos[j]).norm();
      }
    }
  }

  auto weigh = [&](double l) {
    if (l >= params.m_inf) return params.m_inf;
    return params.penalty ? contiguity_penalty(l, params) * l : l;
  };
  Eigen::MatrixXd agent_task(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nt));
  Eigen::MatrixXd task_task = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nt),
                                                    static_cast<Eigen::Index>(nt));
  for (std::size_t k = 0; k < nc; ++k)
    for (std::size_t i = 0; i < nt; ++i) agent_task(k, i) = weigh(len(k, nc + i));
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = i + 1; j < nt; ++j)
      task_task(i, j) = task_task(j, i) = weigh(len(nc + i, nc + j));
  p.cost = assemble_matrix(agent_task, task_task, params.m_inf);
  return p;
}

std::vector<TaskSlot> pending_tasks(const TaskLedger& ledger,
                                    const std::vector<std::uint64_t>& exclude) {
  std::vector<TaskSlot> out;
  for (const auto& [id, u] : ledger.units()) {
    if (u.rec.status != UnitStatus::Pending) continue;
    if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    out.push_back({id, u.rec.anchor, std::max<std::uint32_t>(1, u.rec.num)});
  }
  return out;
}

double route_cost(const AllocationProblem& p, std::size_t agent, const std::vector<int>& route) {
  double c = 0.0;
  int prev = p.agent_node(agent);
  for (int t : route) {
    const int node = p.task_node(static_cast<std::size_t>(t));
    c += p.cost(prev, node);
    prev = node;
  }
  return c;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kOverflowWeight = 1e6;
constexpr std::size_t kMoveBudget = 5000;
// Tight capacities leave few feasible packings; three restarts missed them
// often enough to matter, so the perturbation loop runs longer.
constexpr int kRestarts = 200;
constexpr double kEps = 1e-9;

class RouteSearch {
 public:
  RouteSearch(const AllocationProblem& p, std::vector<char> locked)
      : p_(p), locked_(std::move(locked)), routes_(p.agents.size()), load_(p.agents.size(), 0.0) {}

  std::vector<std::vector<int>>& routes() { return routes_; }
  const std::vector<double>& loads() const { return load_; }
  std::size_t moves() const { return moves_; }

  void add(std::size_t k, std::size_t pos, int t) {
    routes_[k].insert(routes_[k].begin() + static_cast<std::ptrdiff_t>(pos), t);
    load_[k] += demand(t);
  }

  double objective() const {
    double total = 0.0;
    for (std::size_t k = 0; k < routes_.size(); ++k)
      total += route_cost(p_, k, routes_[k]) + kOverflowWeight * overflow(k, load_[k]);
    return total;
  }

  /// Cheapest feasible insertion of every unassigned task.
  void greedy(std::vector<int> pending) {
    // Seed each open route with its agent's nearest task.
    for (std::size_t k = 0; k < routes_.size() && !pending.empty(); ++k) {
      if (locked_[k]) continue;
      auto best = pending.end();
      double best_c = std::numeric_limits<double>::infinity();
      for (auto it = pending.begin(); it != pending.end(); ++it) {
        if (load_[k] + demand(*it) > p_.capacity + kEps) continue;
        const double c = arc(p_.agent_node(k), node(*it));
        if (c < best_c) {
          best_c = c;
          best = it;
        }
      }
      if (best != pending.end()) {
        add(k, 0, *best);
        pending.erase(best);
      }
    }
    insert_all(std::move(pending));
  }

  /// Cheapest insertion until nothing is left. With in_order the tasks go
  /// in as listed, each to its cheapest slot.
  void insert_all(std::vector<int> pending, bool in_order = false) {
    while (!pending.empty()) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t bi = 0, bk = 0, bpos = 0;
      for (std::size_t i = 0; i < (in_order ? 1 : pending.size()); ++i) {
        const int t = pending[i];
        for (std::size_t k = 0; k < routes_.size(); ++k) {
          if (locked_[k]) continue;
          const double over = kOverflowWeight * (overflow(k, load_[k] + demand(t)) -
                                                 overflow(k, load_[k]));
          for (std::size_t pos = 0; pos <= routes_[k].size(); ++pos) {
            const double c = insert_delta(k, pos, t) + over;
            if (c < best - kEps) {
              best = c;
              bi = i;
              bk = k;
              bpos = pos;
            }
          }
        }
      }
      add(bk, bpos, pending[bi]);
      pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(bi));
    }
  }

  void local_search(std::size_t budget) {
    while (moves_ < budget) {
      if (two_opt() || or_opt() || relocate() || swap()) {
        ++moves_;
        continue;
      }
      break;
    }
  }

  /// Pulls count random tasks out of the open routes and reinserts them.
  void perturb(Rng& rng, std::size_t count) {
    std::vector<int> pulled;
    for (std::size_t n = 0; n < count; ++n) {
      std::vector<std::size_t> from;
      for (std::size_t k = 0; k < routes_.size(); ++k)
        if (!locked_[k] && !routes_[k].empty()) from.push_back(k);
      if (from.empty()) break;
      const std::size_t a = from[rng.range(0, from.size() - 1)];
      const std::size_t i = rng.range(0, routes_[a].size() - 1);
      pulled.push_back(routes_[a][i]);
      load_[a] -= demand(pulled.back());
      routes_[a].erase(routes_[a].begin() + static_cast<std::ptrdiff_t>(i));
    }
    insert_all(std::move(pulled), true);
  }

 private:
  double demand(int t) const { return p_.tasks[static_cast<std::size_t>(t)].demand; }
  int node(int t) const { return p_.task_node(static_cast<std::size_t>(t)); }
  double arc(int a, int b) const { return p_.cost(a, b); }
  double overflow(std::size_t k, double load) const {
    return locked_[k] ? 0.0 : std::max(0.0, load - p_.capacity);
  }
  /// Node at position pos of route k; position 0 is the agent.
  int at(std::size_t k, std::size_t pos) const {
    return pos == 0 ? p_.agent_node(k) : node(routes_[k][pos - 1]);
  }
  /// Cost change of inserting t so that it becomes element pos of route k.
  double insert_delta(std::size_t k, std::size_t pos, int t) const {
    const int prev = at(k, pos);
    const int x = node(t);
    if (pos == routes_[k].size()) return arc(prev, x);
    const int next = node(routes_[k][pos]);
    return arc(prev, x) + arc(x, next) - arc(prev, next);
  }
  /// Cost change of removing element i of route k.
  double remove_delta(std::size_t k, std::size_t i) const {
    const int prev = at(k, i);
    const int x = node(routes_[k][i]);
    if (i + 1 == routes_[k].size()) return -arc(prev, x);
    const int next = node(routes_[k][i + 1]);
    return arc(prev, next) - arc(prev, x) - arc(x, next);
  }

  bool two_opt() {
    for (std::size_t k = 0; k < routes_.size(); ++k) {
      auto& r = routes_[k];
      if (r.size() < 2) continue;
      const double base = route_cost(p_, k, r);
      for (std::size_t i = 0; i + 1 < r.size(); ++i)
        for (std::size_t j = i + 1; j < r.size(); ++j) {
          std::reverse(r.begin() + static_cast<std::ptrdiff_t>(i),
                       r.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          if (route_cost(p_, k, r) < base - kEps) return true;
          std::reverse(r.begin() + static_cast<std::ptrdiff_t>(i),
                       r.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        }
    }
    return false;
  }

  bool or_opt() {
    for (std::size_t k = 0; k < routes_.size(); ++k) {
      auto& r = routes_[k];
      const double base = route_cost(p_, k, r);
      for (std::size_t seg = 1; seg <= 3; ++seg) {
        if (r.size() <= seg) continue;
        for (std::size_t i = 0; i + seg <= r.size(); ++i) {
          std::vector<int> piece(r.begin() + static_cast<std::ptrdiff_t>(i),
                                 r.begin() + static_cast<std::ptrdiff_t>(i + seg));
          std::vector<int> rest(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(i));
          rest.insert(rest.end(), r.begin() + static_cast<std::ptrdiff_t>(i + seg), r.end());
          for (std::size_t pos = 0; pos <= rest.size(); ++pos) {
            if (pos == i) continue;
            std::vector<int> cand = rest;
            cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(pos), piece.begin(), piece.end());
            if (route_cost(p_, k, cand) < base - kEps) {
              r = std::move(cand);
              return true;
            }
          }
        }
      }
    }
    return false;
  }

  bool relocate() {
    for (std::size_t a = 0; a < routes_.size(); ++a) {
      if (locked_[a]) continue;
      for (std::size_t i = 0; i < routes_[a].size(); ++i) {
        const int t = routes_[a][i];
        const double d = demand(t);
        const double out = remove_delta(a, i) +
                           kOverflowWeight * (overflow(a, load_[a] - d) - overflow(a, load_[a]));
        for (std::size_t b = 0; b < routes_.size(); ++b) {
          if (b == a || locked_[b]) continue;
          const double over =
              kOverflowWeight * (overflow(b, load_[b] + d) - overflow(b, load_[b]));
          for (std::size_t pos = 0; pos <= routes_[b].size(); ++pos) {
            if (out + over + insert_delta(b, pos, t) < -kEps) {
              routes_[a].erase(routes_[a].begin() + static_cast<std::ptrdiff_t>(i));
              load_[a] -= d;
              add(b, pos, t);
              return true;
            }
          }
        }
      }
    }
    return false;
  }

  double replace_delta(std::size_t k, std::size_t i, int t) const {
    const int prev = at(k, i);
    const int x = node(routes_[k][i]);
    const int y = node(t);
    double d = arc(prev, y) - arc(prev, x);
    if (i + 1 < routes_[k].size()) {
      const int next = node(routes_[k][i + 1]);
      d += arc(y, next) - arc(x, next);
    }
    return d;
  }

  bool swap() {
    for (std::size_t a = 0; a < routes_.size(); ++a) {
      if (locked_[a]) continue;
      for (std::size_t b = a + 1; b < routes_.size(); ++b) {
        if (locked_[b]) continue;
        for (std::size_t i = 0; i < routes_[a].size(); ++i)
          for (std::size_t j = 0; j < routes_[b].size(); ++j) {
            const int x = routes_[a][i], y = routes_[b][j];
            const double la = load_[a] - demand(x) + demand(y);
            const double lb = load_[b] - demand(y) + demand(x);
            const double over = kOverflowWeight * (overflow(a, la) + overflow(b, lb) -
                                                   overflow(a, load_[a]) - overflow(b, load_[b]));
            if (replace_delta(a, i, y) + replace_delta(b, j, x) + over < -kEps) {
              routes_[a][i] = y;
              routes_[b][j] = x;
              load_[a] = la;
              load_[b] = lb;
              return true;
            }
          }
      }
    }
    return false;
  }

  const AllocationProblem& p_;
  std::vector<char> locked_;
  std::vector<std::vector<int>> routes_;
  std::vector<double> load_;
  std::size_t moves_ = 0;
};

}  // namespace

AllocationResult solve(const AllocationProblem& problem, std::uint64_t seed) {
  const std::size_t nc = problem.agents.size(), nt = problem.tasks.size();
  const auto expect = static_cast<Eigen::Index>(1 + nc + nt);
  if (nc == 0) throw AllocationError("problem has no agents");
  if (problem.cost.rows() != expect || problem.cost.cols() != expect)
    throw AllocationError("cost matrix does not match problem size");

  AllocationResult res;
  res.routes.assign(nc, {});
  res.sequences.assign(nc, {});
  res.loads.assign(nc, 0.0);
  if (nt == 0) return res;

  // Tasks no agent can reach stay out of the routes and are reported.
  std::vector<int> reachable;
  for (std::size_t i = 0; i < nt; ++i) {
    bool ok = false;
    for (std::size_t k = 0; k < nc && !ok; ++k)
      ok = problem.cost(problem.agent_node(k), problem.task_node(i)) < problem.m_inf;
    if (ok) reachable.push_back(static_cast<int>(i));
    else res.unreachable.push_back(problem.tasks[i].id);
  }

  // A task heavier than Q rides alone on its cheapest free agent.
  std::vector<char> locked(nc, 0);
  std::vector<std::pair<std::size_t, int>> forced;
  std::vector<int> heavy;
  for (int t : reachable)
    if (problem.tasks[static_cast<std::size_t>(t)].demand > problem.capacity + kEps) heavy.push_back(t);
  std::stable_sort(heavy.begin(), heavy.end(), [&](int a, int b) {
    return problem.tasks[static_cast<std::size_t>(a)].demand >
           problem.tasks[static_cast<std::size_t>(b)].demand;
  });
  std::vector<int> normal;
  for (int t : reachable)
    if (std::find(heavy.begin(), heavy.end(), t) == heavy.end()) normal.push_back(t);
  for (int t : heavy) {
    std::size_t best = nc;
    for (std::size_t k = 0; k < nc; ++k) {
      if (locked[k]) continue;
      if (best == nc || problem.cost(problem.agent_node(k), problem.task_node(static_cast<std::size_t>(t))) <
                            problem.cost(problem.agent_node(best), problem.task_node(static_cast<std::size_t>(t))))
        best = k;
    }
    if (best == nc || std::count(locked.begin(), locked.end(), 0) <= 1) {
      normal.push_back(t);  // no agent left to dedicate
      continue;
    }
    locked[best] = 1;
    forced.emplace_back(best, t);
  }
  std::sort(normal.begin(), normal.end());

  RouteSearch search(problem, locked);
  for (auto [k, t] : forced) search.add(k, 0, t);
  search.greedy(normal);
  search.local_search(kMoveBudget);

  auto best_routes = search.routes();
  auto best_loads = search.loads();
  double best_obj = search.objective();
  std::size_t used = search.moves();
  Rng rng(mix_seed(seed, 0xA110CA7EULL));
  for (int r = 0; r < kRestarts && used < kMoveBudget; ++r) {
    RouteSearch again(problem, locked);
    for (std::size_t k = 0; k < nc; ++k)
      for (int t : best_routes[k]) again.add(k, again.routes()[k].size(), t);
    again.perturb(rng, rng.range(1, std::max<std::size_t>(2, normal.size())));
    again.local_search(kMoveBudget - used);
    used += again.moves();
    const double obj = again.objective();
    if (obj < best_obj - kEps) {
      best_obj = obj;
      best_routes = again.routes();
      best_loads = again.loads();
    }
  }

  res.routes = best_routes;
  res.loads = best_loads;
  res.moves = used;
  // Demands are coarse, so sometimes nothing packs under Q. Capacity stays
  // hard: drop tasks from an overfull route, the smallest one that clears the
  // excess if any, else the heaviest, and report them.
  for (std::size_t k = 0; k < nc; ++k) {
    auto& route = res.routes[k];
    while (!locked[k] && res.loads[k] > problem.capacity + kEps) {
      const double excess = res.loads[k] - problem.capacity;
      auto demand = [&](int t) { return static_cast<double>(problem.tasks[static_cast<std::size_t>(t)].demand); };
      auto pick = route.end();
      for (auto it = route.begin(); it != route.end(); ++it)
        if (demand(*it) >= excess - kEps && (pick == route.end() || demand(*it) < demand(*pick))) pick = it;
      if (pick == route.end())
        pick = std::max_element(route.begin(), route.end(), [&](int a, int b) { return demand(a) < demand(b); });
      res.deferred.push_back(problem.tasks[static_cast<std::size_t>(*pick)].id);
      res.loads[k] -= demand(*pick);
      route.erase(pick);
    }
  }
  std::sort(res.deferred.begin(), res.deferred.end());
  for (std::size_t k = 0; k < nc; ++k) {
    for (int t : res.routes[k]) res.sequences[k].push_back(problem.tasks[static_cast<std::size_t>(t)].id);
    res.total_cost += route_cost(problem, k, res.routes[k]);
    if (locked[k]) res.oversized = true;
  }
  return res;
}

// ---------------------------------------------------------------------------

void write_instance(std::ostream& out, const AllocationProblem& p, std::uint64_t seed) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << "agents " << p.agents.size() << "\n";
  for (const auto& a : p.agents)
    out << "agent " << a.id << ' ' << a.position.x() << ' ' << a.position.y() << ' '
        << a.position.z() << "\n";
  out << "tasks " << p.tasks.size() << "\n";
  for (const auto& t : p.tasks)
    out << "task " << t.id << ' ' << t.anchor.x() << ' ' << t.anchor.y() << ' ' << t.anchor.z()
        << ' ' << t.demand << "\n";
  out << "capacity " << p.capacity << "\n";
  out << "m_inf " << p.m_inf << "\n";
  out << "seed " << seed << "\n";
  out << "matrix " << p.cost.rows() << "\n";
  for (Eigen::Index r = 0; r < p.cost.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cost.cols(); ++c) out << (c ? " " : "") << p.cost(r, c);
    out << "\n";
  }
  out.flags(flags);
  out.precision(prec);
}

namespace {

void expect_word(std::istream& in, const char* word) {
  std::string w;
  if (!(in >> w) || w != word) throw AllocationError(std::string("instance: expected '") + word + "'");
}

}  // namespace

AllocationProblem read_instance(std::istream& in, std::uint64_t* seed) {
  AllocationProblem p;
  std::size_t n = 0;
  expect_word(in, "agents");
  if (!(in >> n)) throw AllocationError("instance: bad agent count");
  p.agents.resize(n);
  for (auto& a : p.agents) {
    expect_word(in, "agent");
    if (!(in >> a.id >> a.position.x() >> a.position.y() >> a.position.z()))
      throw AllocationError("instance: bad agent line");
  }
  expect_word(in, "tasks");
  if (!(in >> n)) throw AllocationError("instance: bad task count");
  p.tasks.resize(n);
  for (auto& t : p.tasks) {
    expect_word(in, "task");
    if (!(in >> t.id >> t.anchor.x() >> t.anchor.y() >> t.anchor.z() >> t.demand))
      throw AllocationError("instance: bad task line");
  }
  std::uint64_t s = 0;
  expect_word(in, "capacity");
  if (!(in >> p.capacity)) throw AllocationError("instance: bad capacity");
  expect_word(in, "m_inf");
  if (!(in >> p.m_inf)) throw AllocationError("instance: bad m_inf");
  expect_word(in, "seed");
  if (!(in >> s)) throw AllocationError("instance: bad seed");
  expect_word(in, "matrix");
  if (!(in >> n) || n != 1 + p.agents.size() + p.tasks.size())
    throw AllocationError("instance: matrix size does not match agents and tasks");
  p.cost.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index r = 0; r < p.cost.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cost.cols(); ++c)
      if (!(in >> p.cost(r, c))) throw AllocationError("instance: truncated matrix");
  if (seed) *seed = s;
  return p;
}

void write_result(std::ostream& out, const AllocationProblem& p, const AllocationResult& r) {
  out << "cost " << std::setprecision(10) << r.total_cost << "\n";
  out << "capacity " << p.capacity << "\n";
  for (std::size_t k = 0; k < r.sequences.size(); ++k) {
    out << "route " << p.agents[k].id << " load " << r.loads[k] << " :";
    for (std::uint64_t id : r.sequences[k]) out << ' ' << id;
    out << "\n";
  }
  if (r.oversized) out << "flag oversized\n";
  for (std::uint64_t id : r.unreachable) out << "unreachable " << id << "\n";
  for (std::uint64_t id : r.deferred) out << "deferred " << id << "\n";
  out << "moves " << r.moves << "\n";
}

}  // namespace mrx
