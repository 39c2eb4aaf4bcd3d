#include "deepmerge/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepmerge/error.hpp"

namespace deepmerge {

TileGrid TileGrid::uniform(int width, int height, int cols, int rows) {
  if (cols <= 0 || rows <= 0 || cols > width || rows > height) throw Error("invalid tile grid");
  TileGrid g;
  for (int c = 0; c <= cols; ++c) g.x_edges.push_back(static_cast<int>(static_cast<long long>(width) * c / cols));
  for (int r = 0; r <= rows; ++r) g.y_edges.push_back(static_cast<int>(static_cast<long long>(height) * r / rows));
  return g;
}

Raster crop(const Raster& raster, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > raster.width || y0 + height > raster.height) {
    throw Error("crop window outside raster");
  }
  Raster out(width, height, raster.bands);
  for (int y = 0; y < height; ++y) {
    const auto* src = &raster.data[(static_cast<std::size_t>(y0 + y) * raster.width + x0) * raster.bands];
    std::copy(src, src + static_cast<std::size_t>(width) * raster.bands,
              &out.data[static_cast<std::size_t>(y) * width * raster.bands]);
  }
  return out;
}

LabelImage crop(const SegmentMap& map, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > map.width() || y0 + height > map.height()) {
    throw Error("crop window outside segment map");
  }
  LabelImage out{width, height, {}};
  out.labels.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.labels.push_back(map.label(x0 + x, y0 + y));
  }
  return out;
}

double signed_area(const Ring& ring) {
  double s = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

namespace {

bool on_segment(Point2 a, Point2 b, Point2 p) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (cross != 0.0) return false;
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

void validate_ring(const Ring& ring) {
  if (ring.size() < 3) throw Error("degenerate ring (<3 vertices)");
}

template <typename Fn>
void for_each_edge(const Polygon& polygon, Fn&& fn) {
  auto ring_edges = [&](const Ring& ring) {
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) fn(ring[i], ring[(i + 1) % n]);
  };
  ring_edges(polygon.exterior);
  for (const Ring& h : polygon.holes) ring_edges(h);
}

}  // namespace

bool contains(const Polygon& polygon, Point2 p) {
  bool boundary = false;
  bool inside = false;
  for_each_edge(polygon, [&](Point2 a, Point2 b) {
    if (on_segment(a, b, p)) boundary = true;
    if ((a.y <= p.y && p.y < b.y) || (b.y <= p.y && p.y < a.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x > p.x) inside = !inside;
    }
  });
  return boundary || inside;
}

std::vector<std::uint8_t> rasterize_polygon(const Polygon& polygon, int width, int height) {
  validate_ring(polygon.exterior);
  for (const Ring& h : polygon.holes) validate_ring(h);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);

  double min_y = polygon.exterior[0].y;
  double max_y = min_y;
  for (const Point2& p : polygon.exterior) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int row_begin = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
  const int row_end = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));

  auto fill = [&](int y, double a, double b) {
    const int x0 = std::max(0, static_cast<int>(std::ceil(a - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(b - 0.5)));
    for (int x = x0; x <= x1; ++x) mask[static_cast<std::size_t>(y) * width + x] = 1;
  };

  std::vector<double> xs;
  for (int y = row_begin; y <= row_end; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for_each_edge(polygon, [&](Point2 a, Point2 b) {
      if ((a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y)) {
        xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      } else if (a.y == yc && b.y == yc) {
        fill(y, std::min(a.x, b.x), std::max(a.x, b.x));
      }
    });
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) fill(y, xs[i], xs[i + 1]);
  }
  // Vertices sitting exactly on pixel centres can be skipped by the
  // half-open crossing rule; the boundary counts as inside.
  for_each_edge(polygon, [&](Point2 a, Point2) {
    const double fx = a.x - 0.5;
    const double fy = a.y - 0.5;
    if (fx == std::floor(fx) && fy == std::floor(fy) && fx >= 0 && fy >= 0 && fx < width && fy < height) {
      mask[static_cast<std::size_t>(fy) * width + static_cast<std::size_t>(fx)] = 1;
    }
  });
  return mask;
}

ReferenceRaster rasterize_polygons(const ReferenceSet& refs, int width, int height) {
  if (width <= 0 || height <= 0) throw Error("rasterize: dimensions must be positive");
  ReferenceRaster out;
  out.width = width;
  out.height = height;
  out.owner.assign(static_cast<std::size_t>(width) * height, kNoReference);
  out.mask_areas.assign(refs.polygons.size(), 0);
  // Paint in ascending id order so the highest id wins overlaps.
  std::vector<std::size_t> order(refs.polygons.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return refs.polygons[a].id < refs.polygons[b].id; });
  for (std::size_t idx : order) {
    const std::vector<std::uint8_t> mask = rasterize_polygon(refs.polygons[idx], width, height);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) {
        out.owner[i] = static_cast<std::int32_t>(idx);
        ++out.mask_areas[idx];
      }
    }
  }
  return out;
}

// --- boundary tracing ------------------------------------------------------

namespace {

struct Edge {
  std::uint32_t label;
  std::int64_t from;  // vertex id = y * (width + 1) + x
  std::int64_t to;
};

}  // namespace

ReferenceSet trace_boundaries(const SegmentMap& map) {
  const int w = map.width();
  const int h = map.height();
  const std::int64_t stride = w + 1;
  auto vid = [stride](int x, int y) { return static_cast<std::int64_t>(y) * stride + x; };

  // Directed pixel-edge boundary with the segment on the right-hand side
  // (y axis pointing down), giving positive shoelace area for exteriors.
  std::vector<Edge> edges;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t l = map.label(x, y);
      if (y == 0 || map.label(x, y - 1) != l) edges.push_back({l, vid(x, y), vid(x + 1, y)});
      if (x + 1 == w || map.label(x + 1, y) != l) edges.push_back({l, vid(x + 1, y), vid(x + 1, y + 1)});
      if (y + 1 == h || map.label(x, y + 1) != l) edges.push_back({l, vid(x + 1, y + 1), vid(x, y + 1)});
      if (x == 0 || map.label(x - 1, y) != l) edges.push_back({l, vid(x, y + 1), vid(x, y)});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.label != b.label ? a.label < b.label : a.from < b.from;
  });

  ReferenceSet out;
  out.polygons.resize(map.count());
  std::vector<char> used(edges.size(), 0);

  std::size_t begin = 0;
  while (begin < edges.size()) {
    const std::uint32_t label = edges[begin].label;
    std::size_t end = begin;
    while (end < edges.size() && edges[end].label == label) ++end;

    auto outgoing = [&](std::int64_t v, std::size_t& first, std::size_t& last) {
      auto lo = std::lower_bound(edges.begin() + begin, edges.begin() + end, v,
                                 [](const Edge& e, std::int64_t key) { return e.from < key; });
      first = static_cast<std::size_t>(lo - edges.begin());
      last = first;
      while (last < end && edges[last].from == v) ++last;
    };

    Polygon& poly = out.polygons[label];
    poly.id = label;
    for (std::size_t start = begin; start < end; ++start) {
      if (used[start]) continue;
      std::vector<std::int64_t> verts;
      std::size_t cur = start;
      while (true) {
        used[cur] = 1;
        verts.push_back(edges[cur].from);
        const std::int64_t v = edges[cur].to;
        const int dx = static_cast<int>(v % stride - edges[cur].from % stride);
        const int dy = static_cast<int>(v / stride - edges[cur].from / stride);
        std::size_t first = 0;
        std::size_t last = 0;
        outgoing(v, first, last);
        std::size_t next = end;
        // At a pinch vertex turn right (towards the segment) so that
        // diagonal-only contacts stay separate.
        int best_rank = 3;
        for (std::size_t k = first; k < last; ++k) {
          const int ndx = static_cast<int>(edges[k].to % stride - v % stride);
          const int ndy = static_cast<int>(edges[k].to / stride - v / stride);
          int rank = 1;
          if (ndx == -dy && ndy == dx) rank = 0;
          else if (ndx == dy && ndy == -dx) rank = 2;
          if (rank < best_rank) {
            best_rank = rank;
            next = k;
          }
        }
        if (next == start) break;
        if (next == end || used[next]) throw Error("trace: boundary walk did not close");
        cur = next;
      }
      // Keep corners only, starting from the smallest (y, x) vertex.
      const std::size_t n = verts.size();
      std::vector<std::int64_t> corners;
      for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t p = verts[(i + n - 1) % n];
        const std::int64_t c = verts[i];
        const std::int64_t q = verts[(i + 1) % n];
        const std::int64_t d1x = c % stride - p % stride, d1y = c / stride - p / stride;
        const std::int64_t d2x = q % stride - c % stride, d2y = q / stride - c / stride;
        if (d1x != d2x || d1y != d2y) corners.push_back(c);
      }
      const auto min_it = std::min_element(corners.begin(), corners.end());
      std::rotate(corners.begin(), min_it, corners.end());
      Ring ring;
      ring.reserve(corners.size());
      for (std::int64_t c : corners) {
        ring.push_back({static_cast<double>(c % stride), static_cast<double>(c / stride)});
      }
      if (signed_area(ring) > 0) {
        if (!poly.exterior.empty()) throw Error("trace: segment has more than one exterior ring");
        poly.exterior = std::move(ring);
      } else {
        poly.holes.push_back(std::move(ring));
      }
    }
    begin = end;
  }
  return out;
}

}  // namespace deepmerge
