#pragma once

#include <span>
#include <vector>

#include "deepmerge/polygon.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

// Counter-clockwise (y-up convention) hull without collinear points.
std::vector<Point2> convex_hull(std::vector<Point2> points);

struct RotatedRect {
  Point2 center;
  double length = 0.0;  // long side
  double width = 0.0;   // short side
  Point2 axis{1.0, 0.0};  // unit vector along the long side

  double area() const { return length * width; }
  double perimeter() const { return 2.0 * (length + width); }
};

// Minimum-area enclosing rectangle of a convex polygon (rotating calipers).
RotatedRect min_area_rect(std::span<const Point2> hull);

// Minimum-area rectangle over the corner points of a pixel set.
RotatedRect pixel_set_mbr(std::span<const Pixel> pixels);

}  // namespace deepmerge
