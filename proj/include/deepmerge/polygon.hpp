#pragma once

#include <cstdint>
#include <vector>

#include "deepmerge/raster.hpp"

namespace deepmerge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Implicitly closed: the last vertex connects back to the first.
using Ring = std::vector<Point2>;

struct Polygon {
  std::int64_t id = 0;
  Ring exterior;
  std::vector<Ring> holes;
};

struct ReferenceSet {
  std::vector<Polygon> polygons;
};

// Rectangular partition of a mosaic. Column boundaries x_edges[0..cols]
// and row boundaries y_edges[0..rows] are strictly increasing.
struct TileGrid {
  std::vector<int> x_edges;
  std::vector<int> y_edges;

  static TileGrid uniform(int width, int height, int cols, int rows);
  int cols() const { return static_cast<int>(x_edges.size()) - 1; }
  int rows() const { return static_cast<int>(y_edges.size()) - 1; }
  int tile_width(int col) const { return x_edges[col + 1] - x_edges[col]; }
  int tile_height(int row) const { return y_edges[row + 1] - y_edges[row]; }
};

Raster crop(const Raster& raster, int x0, int y0, int width, int height);
LabelImage crop(const SegmentMap& map, int x0, int y0, int width, int height);

double signed_area(const Ring& ring);

// Point-in-polygon with boundary points counted as inside; holes use the
// even-odd rule together with the exterior.
bool contains(const Polygon& polygon, Point2 p);

// Per-pixel mask of one polygon under pixel-centre inclusion.
std::vector<std::uint8_t> rasterize_polygon(const Polygon& polygon, int width, int height);

constexpr std::int32_t kNoReference = -1;

// Index (into refs.polygons) owning each pixel; overlaps go to the higher
// polygon id. `mask_areas` holds each polygon's area before resolution.
struct ReferenceRaster {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> owner;
  std::vector<std::uint64_t> mask_areas;
};

ReferenceRaster rasterize_polygons(const ReferenceSet& refs, int width, int height);

// One polygon per segment (id = label) whose rings follow pixel edges;
// holes enclose other segments.
ReferenceSet trace_boundaries(const SegmentMap& map);

}  // namespace deepmerge
