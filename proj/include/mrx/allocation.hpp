#pragma once

#include "mrx/connectivity_graph.hpp"
#include "mrx/task_registry.hpp"
#include "mrx/voxel_map.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mrx {

struct AllocationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CostParams {
  double sigma_q = 1.1;
  double lambda_c = 1.2;
  double grid_edge = 5.0;
  double d_thr = 10.0;
  double m_inf = 1e9;
  bool penalty = true;  // false forces psi = 1

  void validate() const;
};

/// psi(rho) with rho = l / (lambda_c * L_g): 1 inside the connectivity
/// radius, 1 + (rho - 1)^2 outside.
template <typename Scalar>
Scalar contiguity_kernel(Scalar rho) {
  if (rho <= Scalar(1)) return Scalar(1);
  const Scalar e = rho - Scalar(1);
  return Scalar(1) + e * e;
}

template <typename Scalar>
Scalar contiguity_penalty(Scalar l, Scalar lambda_c, Scalar grid_edge) {
  return contiguity_kernel(l / (lambda_c * grid_edge));
}

inline double contiguity_penalty(double l, const CostParams& p) {
  return contiguity_penalty(l, p.lambda_c, p.grid_edge);
}

/// Non-OCCUPIED voxel nearest to p (p's own voxel when possible).
std::optional<std::uint32_t> passable_voxel_near(const VoxelMap& map, const Vec3& p);

/// Hybrid path length. Below d_thr: voxel search with UNKNOWN traversable.
/// Otherwise the connectivity graph between the vertices containing (or
/// nearest to) each point, plus the legs to and from those anchors. A null
/// graph forces the voxel branch. Unreachable returns params.m_inf.
double traversal_cost(const Vec3& a, const Vec3& b, const VoxelMap& map,
                      const ConnectivityGraph* graph, const CostParams& params);

struct AgentSlot {
  int id = 0;
  Vec3 position = Vec3::Zero();
};

struct TaskSlot {
  std::uint64_t id = 0;
  Vec3 anchor = Vec3::Zero();
  std::uint32_t demand = 1;
};

/// Node 0 is the depot, nodes 1..N_c the agents, the rest the tasks.
struct AllocationProblem {
  std::vector<AgentSlot> agents;
  std::vector<TaskSlot> tasks;
  Eigen::MatrixXd cost;
  double capacity = 0.0;
  double m_inf = 1e9;

  int agent_node(std::size_t k) const { return 1 + static_cast<int>(k); }
  int task_node(std::size_t i) const { return 1 + static_cast<int>(agents.size() + i); }
  double workload() const;
};

struct AllocationResult {
  std::vector<std::vector<std::uint64_t>> sequences;  // per agent, in problem order
  std::vector<std::vector<int>> routes;               // task indices
  std::vector<double> loads;
  double total_cost = 0.0;
  bool oversized = false;         // a task with D > Q sits alone on a route
  std::vector<std::uint64_t> unreachable;
  std::vector<std::uint64_t> deferred;  // no packing within Q fits them; left for a later round
  std::size_t moves = 0;
};

AllocationProblem build_problem(const std::vector<AgentSlot>& agents,
                                const std::vector<TaskSlot>& tasks, const VoxelMap& map,
                                const ConnectivityGraph* graph, const CostParams& params);

/// Pending units of a ledger as task slots, ascending id, minus `exclude`.
std::vector<TaskSlot> pending_tasks(const TaskLedger& ledger,
                                    const std::vector<std::uint64_t>& exclude = {});

/// Fills the depot/agent/task block layout from the agent-task and task-task blocks.
Eigen::MatrixXd assemble_matrix(const Eigen::MatrixXd& agent_task, const Eigen::MatrixXd& task_task,
                                double m_inf);

double route_cost(const AllocationProblem& p, std::size_t agent, const std::vector<int>& route);

AllocationResult solve(const AllocationProblem& problem, std::uint64_t seed);

void write_instance(std::ostream& out, const AllocationProblem& p, std::uint64_t seed);
AllocationProblem read_instance(std::istream& in, std::uint64_t* seed = nullptr);
void write_result(std::ostream& out, const AllocationProblem& p, const AllocationResult& r);

}  // namespace mrx
