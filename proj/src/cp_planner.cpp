#include "mrx/cp_planner.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mrx {

void MotionLimits::validate() const {
  if (!(v_max > 0.0) || !(omega_max > 0.0) || !(a_max > 0.0))
    throw PlanError("motion limits must be positive");
}

std::vector<Vec3> clean_polyline(std::vector<Vec3> pts, double eps) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts)
    if (out.empty() || (p - out.back()).norm() > eps) out.push_back(p);
  return out;
}

double path_tsp_cost(const Eigen::MatrixXd& cost, const std::vector<int>& order) {
  double total = 0.0;
  for (std::size_t i = 1; i < order.size(); ++i) total += cost(order[i - 1], order[i]);
  return total;
}

std::vector<int> solve_path_tsp(const Eigen::MatrixXd& cost, bool fixed_end) {
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  const int last = fixed_end && n > 1 ? n - 1 : -1;
  std::vector<int> inner;
  for (int i = 1; i < n; ++i)
    if (i != last) inner.push_back(i);
  auto wrap = [&](const std::vector<int>& mid) {
    std::vector<int> order{0};
    order.insert(order.end(), mid.begin(), mid.end());
    if (last >= 0) order.push_back(last);
    return order;
  };

  if (inner.size() <= 6) {
    std::vector<int> best = inner;
    double best_cost = path_tsp_cost(cost, wrap(inner));
    while (std::next_permutation(inner.begin(), inner.end())) {
      const double c = path_tsp_cost(cost, wrap(inner));
      if (c < best_cost) {
        best_cost = c;
        best = inner;
      }
    }
    return wrap(best);
  }

  // nearest neighbor
  std::vector<int> mid;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  int at = 0;
  for (std::size_t step = 0; step < inner.size(); ++step) {
    int pick = -1;
    for (int c : inner)
      if (!used[static_cast<std::size_t>(c)] && (pick < 0 || cost(at, c) < cost(at, pick))) pick = c;
    used[static_cast<std::size_t>(pick)] = 1;
    mid.push_back(pick);
    at = pick;
  }
  // or-opt: move runs of 1..3 stops anywhere else, first improvement
  double best_cost = path_tsp_cost(cost, wrap(mid));
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t len = 1; len <= 3 && !improved; ++len)
      for (std::size_t i = 0; i + len <= mid.size() && !improved; ++i) {
        std::vector<int> run(mid.begin() + static_cast<long>(i), mid.begin() + static_cast<long>(i + len));
        std::vector<int> rest = mid;
        rest.erase(rest.begin() + static_cast<long>(i), rest.begin() + static_cast<long>(i + len));
        for (std::size_t j = 0; j <= rest.size() && !improved; ++j) {
          if (j == i) continue;
          std::vector<int> cand = rest;
          cand.insert(cand.begin() + static_cast<long>(j), run.begin(), run.end());
          const double c = path_tsp_cost(cost, wrap(cand));
          if (c < best_cost - 1e-12) {
            best_cost = c;
            mid = std::move(cand);
            improved = true;
          }
        }
      }
  }
  return wrap(mid);
}

std::optional<std::vector<Vec3>> graph_polyline(const ConnectivityGraph& graph,
                                                const VoxelMap& map, const Vec3& a,
                                                const Vec3& b) {
  const auto va = graph.nearest_vertex(map, a);
  const auto vb = graph.nearest_vertex(map, b);
  if (!va || !vb) return std::nullopt;
  std::vector<Vec3> pts{a};
  if (*va != *vb) {
    const PathTree tree = graph.shortest_paths(*va);
    if (tree.dist[*vb] == kUnreachable) return std::nullopt;
    for (std::uint32_t v : graph.path(tree, *vb)) pts.push_back(graph.vertex(v).anchor);
  }
  pts.push_back(b);
  return clean_polyline(std::move(pts));
}

namespace {

constexpr double kNoLeg = 1e9;

double leg_time(const std::vector<Vec3>& pts, const std::optional<Vec3>& v0, const MotionLimits& lim) {
  if (pts.size() < 2) return 0.0;
  const Vec3 entry = v0 ? *v0 : Vec3(lim.v_max * (pts[1] - pts[0]).normalized());
  return tour_cost(pts, entry, lim);
}

}  // namespace

GlobalTour plan_global_tour(const Vec3& start, const Vec3& velocity,
                            const std::vector<TourStop>& stops, const LegPath& leg,
                            const MotionLimits& lim) {
  GlobalTour tour;
  std::vector<std::size_t> live;
  std::vector<std::optional<std::vector<Vec3>>> first(stops.size());
  for (std::size_t i = 0; i < stops.size(); ++i) {
    first[i] = leg(start, stops[i].position);
    if (first[i]) live.push_back(i);
    else tour.unreachable.push_back(stops[i].id);
  }
  const int n = 1 + static_cast<int>(live.size());
  tour.cost = Eigen::MatrixXd::Zero(n, n);
  for (int j = 1; j < n; ++j)
    tour.cost(0, j) = leg_time(clean_polyline(*first[live[static_cast<std::size_t>(j - 1)]]), velocity, lim);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) {
      if (i == j) continue;
      const auto p = leg(stops[live[static_cast<std::size_t>(i - 1)]].position,
                         stops[live[static_cast<std::size_t>(j - 1)]].position);
      tour.cost(i, j) = p ? leg_time(clean_polyline(*p), std::nullopt, lim) : kNoLeg;
    }
  const std::vector<int> order = solve_path_tsp(tour.cost, false);
  tour.total = path_tsp_cost(tour.cost, order);
  for (std::size_t k = 1; k < order.size(); ++k)
    tour.order.push_back(stops[live[static_cast<std::size_t>(order[k] - 1)]].id);
  tour.order.insert(tour.order.end(), tour.unreachable.begin(), tour.unreachable.end());
  return tour;
}

// ---------------------------------------------------------------------------

FrontierCluster make_cluster(const VoxelMap& map, std::vector<std::uint32_t> voxels) {
  FrontierCluster c;
  std::sort(voxels.begin(), voxels.end());
  c.voxels = std::move(voxels);
  if (c.voxels.empty()) return c;
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(c.voxels.size()));
  for (std::size_t i = 0; i < c.voxels.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = map.center(c.voxels[i]);
  c.centroid = pts.rowwise().mean();
  if (c.voxels.size() == 1) return c;
  const Eigen::Matrix3Xd centered = pts.colwise() - c.centroid;
  const Eigen::Matrix3d cov = centered * centered.transpose() / static_cast<double>(c.voxels.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vec3 axis = eig.eigenvectors().col(2);
  // fix the sign so the axis does not depend on solver internals
  for (int k = 0; k < 3; ++k)
    if (std::abs(axis[k]) > 1e-12) {
      if (axis[k] < 0) axis = -axis;
      break;
    }
  c.axis = axis;
  const Eigen::RowVectorXd proj = axis.transpose() * centered;
  c.extent = proj.maxCoeff() - proj.minCoeff();
  return c;
}

namespace {

void split_cluster(const VoxelMap& map, FrontierCluster c, double split_length,
                   std::vector<FrontierCluster>& out) {
  if (c.extent <= split_length) {
    out.push_back(std::move(c));
    return;
  }
  std::vector<std::uint32_t> lo, hi;
  for (std::uint32_t v : c.voxels) ((map.center(v) - c.centroid).dot(c.axis) > 0.0 ? hi : lo).push_back(v);
  if (lo.empty() || hi.empty()) {
    out.push_back(std::move(c));
    return;
  }
  split_cluster(map, make_cluster(map, std::move(lo)), split_length, out);
  split_cluster(map, make_cluster(map, std::move(hi)), split_length, out);
}

}  // namespace

std::vector<FrontierCluster> cluster_frontiers(const VoxelMap& map,
                                               std::span<const std::uint32_t> frontier_voxels,
                                               double split_length) {
  std::vector<std::uint32_t> sorted(frontier_voxels.begin(), frontier_voxels.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  auto in_set = [&](std::uint32_t v) { return std::binary_search(sorted.begin(), sorted.end(), v); };
  std::vector<char> taken(sorted.size(), 0);
  std::vector<FrontierCluster> out;
  const Index3& d = map.dims();
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    if (taken[s]) continue;
    taken[s] = 1;
    std::vector<std::uint32_t> group{sorted[s]}, stack{sorted[s]};
    while (!stack.empty()) {
      const Index3 v = map.unravel(stack.back());
      stack.pop_back();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const Index3 n(v.x() + dx, v.y() + dy, v.z() + dz);
            if (n == v || n.x() < 0 || n.y() < 0 || n.z() < 0 || n.x() >= d.x() || n.y() >= d.y() ||
                n.z() >= d.z())
              continue;
            const std::uint32_t ni = map.linear(n);
            if (!in_set(ni)) continue;
            const auto pos = static_cast<std::size_t>(
                std::lower_bound(sorted.begin(), sorted.end(), ni) - sorted.begin());
            if (taken[pos]) continue;
            taken[pos] = 1;
            group.push_back(ni);
            stack.push_back(ni);
          }
    }
    split_cluster(map, make_cluster(map, std::move(group)), split_length, out);
  }
  std::sort(out.begin(), out.end(),
            [](const FrontierCluster& a, const FrontierCluster& b) { return a.voxels.front() < b.voxels.front(); });
  return out;
}

// ---------------------------------------------------------------------------

bool visible(const VoxelMap& map, const Vec3& p, std::uint32_t target, double range) {
  const Vec3 q = map.center(target);
  const double dist = (q - p).norm();
  if (dist > range) return false;
  if (dist == 0.0) return true;
  bool clear = true;
  traverse_ray(map, p, (q - p) / dist, dist, [&](std::uint32_t i, double) {
    if (i == target) return false;
    if (map.state(i) != CellState::Free) {
      clear = false;
      return false;
    }
    return true;
  });
  return clear;
}

namespace {

bool collision_clear(const VoxelMap& map, std::uint32_t i) {
  if (map.state(i) != CellState::Free) return false;
  bool ok = true;
  map.for_each_neighbor6(i, [&](std::uint32_t n) { ok = ok && map.state(n) != CellState::Occupied; });
  return ok;
}

}  // namespace

std::vector<Viewpoint> viewpoint_candidates(const FrontierCluster& cluster, const VoxelMap& map,
                                            const ViewpointParams& params) {
  std::vector<Viewpoint> out;
  const double two_pi = 2.0 * std::acos(-1.0);
  for (double r : params.radii)
    for (int k = 0; k < params.yaw_samples; ++k) {
      const double th = two_pi * k / params.yaw_samples;
      Vec3 p = cluster.centroid + r * Vec3(std::cos(th), std::sin(th), 0.0);
      Index3 v = map.voxel_of(p);
      if (v.x() < 0 || v.y() < 0 || v.x() >= map.dims().x() || v.y() >= map.dims().y()) continue;
      v.z() = std::clamp(v.z(), 0, map.dims().z() - 1);
      // nearest clear voxel in the column, lower z first on ties
      std::optional<int> z;
      for (int dz = 0; dz < map.dims().z() && !z; ++dz)
        for (int s : {-1, 1}) {
          const int zz = v.z() + s * dz;
          if (zz < 0 || zz >= map.dims().z()) continue;
          if (collision_clear(map, map.linear(Index3(v.x(), v.y(), zz)))) {
            z = zz;
            break;
          }
          if (dz == 0) break;
        }
      if (!z) continue;
      v.z() = *z;
      p = map.center(v);
      Viewpoint vp;
      vp.position = p;
      vp.yaw = std::atan2(cluster.centroid.y() - p.y(), cluster.centroid.x() - p.x());
      for (std::uint32_t f : cluster.voxels) vp.covered += visible(map, p, f, params.sensor_range) ? 1 : 0;
      if (vp.covered > 0) out.push_back(vp);
    }
  return out;
}

std::optional<Viewpoint> sample_viewpoints(const FrontierCluster& cluster, const VoxelMap& map,
                                           const Vec3& agent, const ViewpointParams& params) {
  std::optional<Viewpoint> best;
  for (const Viewpoint& vp : viewpoint_candidates(cluster, map, params)) {
    if (!best || vp.covered > best->covered ||
        (vp.covered == best->covered && (vp.position - agent).norm() < (best->position - agent).norm()))
      best = vp;
  }
  return best;
}

std::vector<std::size_t> plan_local_tour(const Vec3& start, const std::optional<Vec3>& end,
                                         const std::vector<Viewpoint>& viewpoints,
                                         const std::function<double(const Vec3&, const Vec3&)>& dist) {
  std::vector<Vec3> pts{start};
  for (const auto& vp : viewpoints) pts.push_back(vp.position);
  if (end) pts.push_back(*end);
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) cost(i, j) = dist ? dist(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)])
                                    : (pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]).norm();
  std::vector<std::size_t> out;
  for (int node : solve_path_tsp(cost, end.has_value()))
    if (node >= 1 && node <= static_cast<int>(viewpoints.size())) out.push_back(static_cast<std::size_t>(node - 1));
  return out;
}

}  // namespace mrx
