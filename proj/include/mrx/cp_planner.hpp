#pragma once

#include "mrx/connectivity_graph.hpp"
#include "mrx/voxel_map.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mrx {

struct PlanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MotionLimits {
  double v_max = 2.0;
  double omega_max = 0.9;
  double a_max = 2.0;

  void validate() const;
};

/// Traversal time of a polyline entered with velocity v0: l / v_m plus a
/// per-segment penalty for the velocity component along the segment,
/// (v_m - |v|)^2 / (2 v_m a_m) + 2 |v| / a_m when v points backwards.
/// Segment k > 0 is entered with v_m along segment k - 1.
template <typename Scalar>
Scalar tour_cost(std::span<const Point3<Scalar>> path, const Point3<Scalar>& v0, Scalar v_max,
                 Scalar a_max) {
  if (path.size() < 2) throw PlanError("tour_cost needs at least two waypoints");
  Scalar length(0), penalty(0);
  Point3<Scalar> entry = v0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Point3<Scalar> seg = path[k + 1] - path[k];
    const Scalar l = seg.norm();
    if (!(l > Scalar(0))) throw PlanError("tour_cost: repeated waypoint");
    const Point3<Scalar> dir = seg / l;
    const Scalar proj = entry.dot(dir);
    const Scalar mag = std::abs(proj);
    const Scalar slow = v_max - mag;
    penalty += slow * slow / (Scalar(2) * v_max * a_max);
    if (proj < Scalar(0)) penalty += Scalar(2) * mag / a_max;  // H(0) = 0
    length += l;
    entry = v_max * dir;
  }
  return length / v_max + penalty;
}

inline double tour_cost(std::span<const Vec3> path, const Vec3& v0, const MotionLimits& lim) {
  return tour_cost<double>(path, v0, lim.v_max, lim.a_max);
}

/// Drops consecutive points closer than eps.
std::vector<Vec3> clean_polyline(std::vector<Vec3> pts, double eps = 1e-9);

/// Open-path TSP over a cost matrix. Node 0 is the fixed start; with
/// fixed_end the last node is the fixed end. Returns the visiting order
/// including the fixed nodes. Exhaustive up to 6 free nodes, otherwise
/// nearest neighbor followed by or-opt.
std::vector<int> solve_path_tsp(const Eigen::MatrixXd& cost, bool fixed_end);
double path_tsp_cost(const Eigen::MatrixXd& cost, const std::vector<int>& order);

/// Polyline from a to b for a leg of the global tour, or nullopt.
using LegPath = std::function<std::optional<std::vector<Vec3>>(const Vec3& a, const Vec3& b)>;

/// Polyline along the connectivity graph: a, the anchors on the shortest
/// vertex path between the regions of a and b, then b.
std::optional<std::vector<Vec3>> graph_polyline(const ConnectivityGraph& graph,
                                                const VoxelMap& map, const Vec3& a,
                                                const Vec3& b);

struct TourStop {
  std::uint64_t id = 0;
  Vec3 position = Vec3::Zero();
};

struct GlobalTour {
  std::vector<std::uint64_t> order;
  std::vector<std::uint64_t> unreachable;  // appended to order, last
  Eigen::MatrixXd cost;                    // node 0 = agent, then the reachable stops
  double total = 0.0;
};

/// Fixed-start ATSP over the stops. The leg leaving the agent uses its real
/// velocity; every other leg is entered aligned with its first segment.
GlobalTour plan_global_tour(const Vec3& start, const Vec3& velocity,
                            const std::vector<TourStop>& stops, const LegPath& leg,
                            const MotionLimits& lim);

struct FrontierCluster {
  std::vector<std::uint32_t> voxels;  // ascending
  Vec3 centroid = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();  // first principal axis
  double extent = 0.0;        // spread of voxel centers along axis
};

/// 26-connected groups of the given frontier voxels, each split recursively
/// at its centroid across the first principal axis while longer than
/// split_length. Clusters are ordered by their lowest voxel index.
std::vector<FrontierCluster> cluster_frontiers(const VoxelMap& map,
                                               std::span<const std::uint32_t> frontier_voxels,
                                               double split_length = 8.0);
FrontierCluster make_cluster(const VoxelMap& map, std::vector<std::uint32_t> voxels);

struct Viewpoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  std::size_t covered = 0;
};

struct ViewpointParams {
  std::vector<double> radii{2.0, 4.0};
  int yaw_samples = 12;
  double sensor_range = 10.0;
};

/// Line of sight through FREE voxels from p to the center of voxel target.
bool visible(const VoxelMap& map, const Vec3& p, std::uint32_t target, double range);

/// Every valid ring candidate around the cluster centroid with its count of
/// visible cluster voxels; candidates that see nothing are dropped.
std::vector<Viewpoint> viewpoint_candidates(const FrontierCluster& cluster, const VoxelMap& map,
                                            const ViewpointParams& params);

/// Candidate covering the most frontier voxels, ties to the one nearer the
/// agent. nullopt defers the cluster.
std::optional<Viewpoint> sample_viewpoints(const FrontierCluster& cluster, const VoxelMap& map,
                                           const Vec3& agent, const ViewpointParams& params);

/// Visiting order of viewpoints from start, ending at `end` when given.
/// Cost between points comes from `dist` (straight line when empty).
std::vector<std::size_t> plan_local_tour(
    const Vec3& start, const std::optional<Vec3>& end, const std::vector<Viewpoint>& viewpoints,
    const std::function<double(const Vec3&, const Vec3&)>& dist = {});

}  // namespace mrx
