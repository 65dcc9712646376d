#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mrx {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Point3 = Eigen::Matrix<Scalar, 3, 1>;

using Vec2 = Point2<double>;
using Vec3 = Point3<double>;
using Index3 = Eigen::Vector3i;

/// Z-component of (a - o) x (b - o).
template <typename Scalar>
inline Scalar cross2(const Point2<Scalar>& o, const Point2<Scalar>& a,
                     const Point2<Scalar>& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Andrew's monotone chain. Counter-clockwise, collinear points dropped.
/// Degenerate inputs yield one point (all coincident) or two (all collinear).
template <typename Scalar>
std::vector<Point2<Scalar>> convex_hull(std::vector<Point2<Scalar>> pts) {
  auto less = [](const Point2<Scalar>& a, const Point2<Scalar>& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  };
  std::sort(pts.begin(), pts.end(), less);
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const auto& a, const auto& b) { return a == b; }),
            pts.end());
  if (pts.size() < 3) return pts;

  std::vector<Point2<Scalar>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

template <typename Scalar>
Scalar segment_distance(const Point2<Scalar>& a, const Point2<Scalar>& b,
                        const Point2<Scalar>& p) {
  const Point2<Scalar> ab = b - a;
  const Scalar len2 = ab.squaredNorm();
  if (len2 == Scalar(0)) return (p - a).norm();
  const Scalar t = std::clamp((p - a).dot(ab) / len2, Scalar(0), Scalar(1));
  return (a + t * ab - p).norm();
}

/// Inclusive point-in-convex-polygon test; `eps` widens the boundary.
template <typename Scalar>
bool hull_contains(const std::vector<Point2<Scalar>>& hull,
                   const Point2<Scalar>& p, Scalar eps) {
  if (hull.empty()) return false;
  if (hull.size() == 1) return (hull[0] - p).norm() <= eps;
  if (hull.size() == 2) return segment_distance(hull[0], hull[1], p) <= eps;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const Scalar edge = (b - a).norm();
    if (cross2(a, b, p) < -eps * edge) return false;
  }
  return true;
}

template <typename Scalar>
Scalar polyline_length(const std::vector<Point3<Scalar>>& pts) {
  Scalar total(0);
  for (std::size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  return total;
}

}  // namespace mrx
