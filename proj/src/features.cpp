#include "deepmerge/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deepmerge/error.hpp"
#include "deepmerge/geometry.hpp"

namespace deepmerge {

std::vector<double> SegmentStats::raw_features() const {
  std::vector<double> v;
  v.reserve(mean.size() * 2 + 4);
  v.insert(v.end(), mean.begin(), mean.end());
  v.insert(v.end(), std.begin(), std.end());
  v.push_back(shape);
  v.push_back(compactness);
  v.push_back(brightness);
  v.push_back(border);
  return v;
}

std::vector<Pixel> to_pixels(std::span<const std::uint32_t> indices, int width) {
  std::vector<Pixel> px;
  px.reserve(indices.size());
  for (std::uint32_t i : indices) px.push_back({static_cast<int>(i % width), static_cast<int>(i / width)});
  return px;
}

SegmentStats compute_stats(const Raster& raster, std::span<const Pixel> pixels) {
  if (pixels.empty()) throw Error("compute_stats: empty segment");
  const int K = raster.bands;
  SegmentStats s;
  s.n = pixels.size();
  s.mean.assign(K, 0.0);
  s.std.assign(K, 0.0);

  int x0 = pixels[0].x, x1 = x0, y0 = pixels[0].y, y1 = y0;
  for (const Pixel& p : pixels) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
    for (int b = 0; b < K; ++b) s.mean[b] += raster.at(p.x, p.y, b);
  }
  for (double& m : s.mean) m /= static_cast<double>(s.n);
  if (s.n > 1) {
    for (const Pixel& p : pixels) {
      for (int b = 0; b < K; ++b) {
        const double d = raster.at(p.x, p.y, b) - s.mean[b];
        s.std[b] += d * d;
      }
    }
    for (double& v : s.std) v = std::sqrt(v / static_cast<double>(s.n - 1));
  }

  // Perimeter in pixel edges via a bounding-box membership mask.
  const int bw = x1 - x0 + 3;
  const int bh = y1 - y0 + 3;
  std::vector<char> inside(static_cast<std::size_t>(bw) * bh, 0);
  for (const Pixel& p : pixels) inside[static_cast<std::size_t>(p.y - y0 + 1) * bw + (p.x - x0 + 1)] = 1;
  std::uint64_t edges = 0;
  for (const Pixel& p : pixels) {
    const std::size_t c = static_cast<std::size_t>(p.y - y0 + 1) * bw + (p.x - x0 + 1);
    edges += !inside[c - 1] + !inside[c + 1] + !inside[c - bw] + !inside[c + bw];
  }
  s.perimeter = static_cast<double>(edges);

  const RotatedRect mbr = pixel_set_mbr(pixels);
  s.mbr_length = mbr.length;
  s.mbr_width = mbr.width;
  s.mbr_perimeter = mbr.perimeter();

  s.shape = s.perimeter / (4.0 * std::sqrt(s.mbr_perimeter));
  s.compactness = s.perimeter * std::sqrt(static_cast<double>(s.n));
  double bright = 0.0;
  for (double m : s.mean) bright += m;
  s.brightness = bright / K;
  s.border = s.perimeter / (2.0 * (s.mbr_length + s.mbr_width));
  return s;
}

std::vector<SegmentStats> compute_all_stats(const Raster& raster, const SegmentMap& map) {
  if (raster.width != map.width() || raster.height != map.height()) {
    throw Error("raster and segment map dimensions differ");
  }
  const auto lists = map.pixel_lists();
  std::vector<SegmentStats> out;
  out.reserve(lists.size());
  for (const auto& l : lists) out.push_back(compute_stats(raster, to_pixels(l, map.width())));
  return out;
}

FeatureNorm FeatureNorm::identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

FeatureNorm FeatureNorm::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error("FeatureNorm::fit: no rows");
  const std::size_t dim = rows[0].size();
  FeatureNorm norm{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error("FeatureNorm::fit: ragged rows");
    for (std::size_t j = 0; j < dim; ++j) norm.shift[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (double& m : norm.shift) m /= n;
  if (rows.size() > 1) {
    std::vector<double> var(dim, 0.0);
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < dim; ++j) var[j] += (r[j] - norm.shift[j]) * (r[j] - norm.shift[j]);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double sd = std::sqrt(var[j] / n);
      norm.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  return norm;
}

std::vector<double> apply_norm(std::span<const double> raw, const FeatureNorm& norm) {
  if (raw.size() != norm.shift.size() || raw.size() != norm.scale.size()) {
    throw Error("feature normalisation dimension mismatch");
  }
  std::vector<double> v(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!(norm.scale[j] > 0.0) || !std::isfinite(norm.shift[j])) {
      throw Error("feature normalisation has zero or non-finite scale at " + std::to_string(j));
    }
    v[j] = (raw[j] - norm.shift[j]) / norm.scale[j];
  }
  return v;
}

std::vector<double> feature_vector(const SegmentStats& stats, const FeatureNorm& norm) {
  const std::vector<double> raw = stats.raw_features();
  return apply_norm(raw, norm);
}

}  // namespace deepmerge
