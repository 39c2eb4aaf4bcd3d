#include "deepmerge/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepmerge/error.hpp"
#include "deepmerge/geometry.hpp"

namespace deepmerge {

void SamplerConfig::validate() const {
  if (!(inner_ratio > 0.0 && inner_ratio < 1.0) || !(outer_ratio > 0.0 && outer_ratio <= inner_ratio)) {
    throw Error("sampler: ratios must satisfy 0 < outer <= inner < 1");
  }
  if (start_width < 1 || width_step < 1) throw Error("sampler: widths must be positive");
}

namespace {

// 1-D squared distance transform (lower envelope of parabolas rooted at
// the finite entries of f).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
               (2.0 * (q - v[k]));
    while (k > 0 && s <= z[k]) {
      --k;
      s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Pixel interior_pole(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw Error("interior_pole: empty pixel set");
  int x0 = pixels[0].x, x1 = x0, y0 = pixels[0].y, y1 = y0;
  double cx = 0.0, cy = 0.0;
  for (const Pixel& p : pixels) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pixels.size());
  cy /= static_cast<double>(pixels.size());
  // One pixel of outside padding around the bounding box.
  const int bw = x1 - x0 + 3;
  const int bh = y1 - y0 + 3;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(bw) * bh, 0.0);
  for (const Pixel& p : pixels) grid[static_cast<std::size_t>(p.y - y0 + 1) * bw + (p.x - x0 + 1)] = inf;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> f(std::max(bw, bh));
  std::vector<double> d(std::max(bw, bh));
  for (int x = 0; x < bw; ++x) {
    for (int y = 0; y < bh; ++y) f[y] = grid[static_cast<std::size_t>(y) * bw + x];
    edt_1d(f.data(), d.data(), bh, v, z);
    for (int y = 0; y < bh; ++y) grid[static_cast<std::size_t>(y) * bw + x] = d[y];
  }
  for (int y = 0; y < bh; ++y) {
    double* row = &grid[static_cast<std::size_t>(y) * bw];
    std::copy(row, row + bw, f.begin());
    edt_1d(f.data(), row, bw, v, z);
  }

  Pixel best = pixels[0];
  double best_d = -1.0;
  double best_c = 0.0;
  for (const Pixel& p : pixels) {
    const double dist = grid[static_cast<std::size_t>(p.y - y0 + 1) * bw + (p.x - x0 + 1)];
    const double c = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
    if (dist > best_d || (dist == best_d && (c < best_c || (c == best_c && (p.y < best.y || (p.y == best.y && p.x < best.x)))))) {
      best = p;
      best_d = dist;
      best_c = c;
    }
  }
  return best;
}

ExtractionCenters extraction_centers(std::span<const Pixel> segment, const SamplerConfig& cfg) {
  if (segment.empty()) throw Error("extraction_centers: empty segment");
  ExtractionCenters out;
  out.centers.push_back(interior_pole(segment));
  if (segment.size() < cfg.split_min_area) return out;

  const RotatedRect mbr = pixel_set_mbr(segment);
  struct Keyed {
    double t;
    Pixel p;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(segment.size());
  for (const Pixel& p : segment) keyed.push_back({(p.x + 0.5) * mbr.axis.x + (p.y + 0.5) * mbr.axis.y, p});
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.p < b.p;
  });
  const std::size_t half = keyed.size() / 2;
  std::vector<Pixel> first, second;
  first.reserve(half);
  second.reserve(keyed.size() - half);
  for (std::size_t i = 0; i < keyed.size(); ++i) (i < half ? first : second).push_back(keyed[i].p);
  std::sort(first.begin(), first.end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  std::sort(second.begin(), second.end(), [](Pixel a, Pixel b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  out.centers.push_back(interior_pole(first));
  out.centers.push_back(interior_pole(second));
  return out;
}

namespace {

int window_begin(int c, int width) { return c - width / 2; }

}  // namespace

double coverage_ratio(std::span<const Pixel> segment, Pixel center, int width) {
  const int x0 = window_begin(center.x, width);
  const int y0 = window_begin(center.y, width);
  std::size_t inside = 0;
  for (const Pixel& p : segment) {
    inside += (p.x >= x0 && p.x < x0 + width && p.y >= y0 && p.y < y0 + width);
  }
  return static_cast<double>(inside) / (static_cast<double>(width) * width);
}

PatchWidths patch_widths(std::span<const Pixel> segment, Pixel center, const SamplerConfig& cfg) {
  cfg.validate();
  if (segment.empty()) throw Error("patch_widths: empty segment");
  PatchWidths w;
  for (int iter = 0; w.w1 == 0 || w.w2 == 0; ++iter) {
    const int width = cfg.start_width + iter * cfg.width_step;
    const double ratio = coverage_ratio(segment, center, width);
    if (ratio <= cfg.inner_ratio && w.w1 == 0) w.w1 = width;
    if (ratio <= cfg.outer_ratio && w.w2 == 0) w.w2 = width;
  }
  w.w3 = w.w2 + (w.w2 - w.w1);
  w.w4 = w.w2 + 2 * (w.w2 - w.w1);
  return w;
}

Patch extract_patch(const Raster& raster, Pixel center, int width) {
  if (width < 1) throw Error("extract_patch: width must be positive");
  Patch patch{width, raster.bands, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * width * raster.bands)};
  const int x0 = window_begin(center.x, width);
  const int y0 = window_begin(center.y, width);
  for (int y = 0; y < width; ++y) {
    const int sy = std::clamp(y0 + y, 0, raster.height - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::clamp(x0 + x, 0, raster.width - 1);
      for (int b = 0; b < raster.bands; ++b) {
        patch.data[(static_cast<std::size_t>(y) * width + x) * raster.bands + b] = raster.at(sx, sy, b);
      }
    }
  }
  return patch;
}

PatchSet patches_with_widths(const Raster& raster, Pixel center, const PatchWidths& widths) {
  PatchSet set;
  set.center = center;
  set.widths = widths;
  set.levels[0] = extract_patch(raster, center, widths.w1);
  set.levels[1] = extract_patch(raster, center, widths.w2);
  set.levels[2] = extract_patch(raster, center, widths.w3);
  set.levels[3] = extract_patch(raster, center, widths.w4);
  return set;
}

PatchSet multi_level_patches(const SegmentMap& map, const Raster& raster, std::uint32_t segment, Pixel center,
                             const SamplerConfig& cfg) {
  if (segment >= map.count()) throw Error("multi_level_patches: unknown segment");
  if (center.x < 0 || center.y < 0 || center.x >= map.width() || center.y >= map.height() ||
      map.label(center.x, center.y) != segment) {
    throw Error("multi_level_patches: centre outside segment");
  }
  std::vector<Pixel> pixels;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.label(x, y) == segment) pixels.push_back({x, y});
    }
  }
  return patches_with_widths(raster, center, patch_widths(pixels, center, cfg));
}

std::vector<PatchSet> segment_patch_sets(const Raster& raster, std::span<const Pixel> segment, const SamplerConfig& cfg) {
  const ExtractionCenters centers = extraction_centers(segment, cfg);
  const PatchWidths widths = patch_widths(segment, centers.centers.front(), cfg);
  std::vector<PatchSet> sets;
  sets.reserve(centers.centers.size());
  for (const Pixel& c : centers.centers) sets.push_back(patches_with_widths(raster, c, widths));
  return sets;
}

Raster patch_mosaic(std::span<const PatchSet> sets) {
  if (sets.empty()) throw Error("patch_mosaic: no patch sets");
  int width = 0;
  int height = 0;
  for (const PatchSet& s : sets) {
    width = std::max(width, s.widths.w1 + s.widths.w2 + s.widths.w3 + s.widths.w4 + 3);
    height += s.widths.w4 + 1;
  }
  const int bands = sets[0].levels[0].bands;
  Raster out(width, height, bands);
  int oy = 0;
  for (const PatchSet& s : sets) {
    int ox = 0;
    for (const Patch& p : s.levels) {
      for (int y = 0; y < p.width; ++y) {
        for (int x = 0; x < p.width; ++x) {
          for (int b = 0; b < bands; ++b) out.at(ox + x, oy + y, b) = p.at(x, y, b);
        }
      }
      ox += p.width + 1;
    }
    oy += s.widths.w4 + 1;
  }
  return out;
}

}  // namespace deepmerge
