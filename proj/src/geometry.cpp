#include "deepmerge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "deepmerge/error.hpp"

namespace deepmerge {

namespace {

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }
double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
Point2 sub(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }

}  // namespace

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point2& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

RotatedRect min_area_rect(std::span<const Point2> hull) {
  const std::size_t n = hull.size();
  if (n == 0) throw Error("min_area_rect: empty point set");
  if (n == 1) return {hull[0], 0.0, 0.0, {1.0, 0.0}};
  if (n == 2) {
    const Point2 d = sub(hull[1], hull[0]);
    const double len = std::hypot(d.x, d.y);
    return {{(hull[0].x + hull[1].x) / 2, (hull[0].y + hull[1].y) / 2}, len, 0.0, {d.x / len, d.y / len}};
  }

  // Caliper pointers: farthest along the edge direction (hi), farthest
  // from the edge (far), and farthest against the edge direction (lo).
  std::size_t hi = 1;
  std::size_t far = 1;
  std::size_t lo = 1;
  double best_area = INFINITY;
  RotatedRect best;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 base = hull[i];
    const Point2 e = sub(hull[(i + 1) % n], base);
    const double elen = std::hypot(e.x, e.y);
    const Point2 u{e.x / elen, e.y / elen};
    const Point2 v{-u.y, u.x};  // inward normal for a CCW hull
    auto pu = [&](std::size_t k) { return dot(sub(hull[k % n], base), u); };
    auto pv = [&](std::size_t k) { return dot(sub(hull[k % n], base), v); };

    if (i == 0) {
      hi = 1;
      while (pu(hi + 1) > pu(hi)) ++hi;
      far = hi;
      while (pv(far + 1) > pv(far)) ++far;
      lo = far;
      while (pu(lo + 1) < pu(lo)) ++lo;
    } else {
      if (hi < i + 1) hi = i + 1;
      while (pu(hi + 1) > pu(hi)) ++hi;
      if (far < hi) far = hi;
      while (pv(far + 1) > pv(far)) ++far;
      if (lo < far) lo = far;
      while (pu(lo + 1) < pu(lo)) ++lo;
    }
    const double umax = pu(hi);
    const double umin = std::min(0.0, pu(lo));
    const double vmax = pv(far);
    const double side_u = umax - umin;
    const double area = side_u * vmax;
    if (area < best_area) {
      best_area = area;
      const double cu = (umax + umin) / 2;
      const double cv = vmax / 2;
      best.center = {base.x + u.x * cu + v.x * cv, base.y + u.y * cu + v.y * cv};
      if (side_u >= vmax) {
        best.length = side_u;
        best.width = vmax;
        best.axis = u;
      } else {
        best.length = vmax;
        best.width = side_u;
        best.axis = v;
      }
    }
  }
  return best;
}

RotatedRect pixel_set_mbr(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw Error("pixel_set_mbr: empty pixel set");
  // Row extremes carry every hull vertex.
  std::map<int, std::pair<int, int>> rows;
  for (const Pixel& p : pixels) {
    auto [it, inserted] = rows.try_emplace(p.y, p.x, p.x);
    if (!inserted) {
      it->second.first = std::min(it->second.first, p.x);
      it->second.second = std::max(it->second.second, p.x);
    }
  }
  std::vector<Point2> corners;
  corners.reserve(rows.size() * 4);
  for (const auto& [y, span] : rows) {
    corners.push_back({static_cast<double>(span.first), static_cast<double>(y)});
    corners.push_back({static_cast<double>(span.first), static_cast<double>(y + 1)});
    corners.push_back({static_cast<double>(span.second + 1), static_cast<double>(y)});
    corners.push_back({static_cast<double>(span.second + 1), static_cast<double>(y + 1)});
  }
  const std::vector<Point2> hull = convex_hull(std::move(corners));
  return min_area_rect(hull);
}

}  // namespace deepmerge
