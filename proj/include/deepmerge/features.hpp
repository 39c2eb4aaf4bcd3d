#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepmerge/raster.hpp"

namespace deepmerge {

// Engineered per-segment statistics. For K bands the feature vector is
// [mean_0..mean_{K-1}, std_0..std_{K-1}, shape, compactness, brightness,
// border], i.e. ten entries for RGB.
struct SegmentStats {
  std::uint64_t n = 0;
  std::vector<double> mean;
  std::vector<double> std;
  double perimeter = 0.0;  // boundary pixel edges, image border included
  double mbr_length = 0.0;
  double mbr_width = 0.0;
  double mbr_perimeter = 0.0;
  double shape = 0.0;        // l / (4 sqrt(C)) with C the MBR perimeter
  double compactness = 0.0;  // l sqrt(n)
  double brightness = 0.0;   // equal-weight mean of band means
  double border = 0.0;       // l / (2 (length + width))

  std::vector<double> raw_features() const;
};

inline std::size_t feature_dim(int bands) { return 2 * static_cast<std::size_t>(bands) + 4; }

// Throws Error on an empty pixel set.
SegmentStats compute_stats(const Raster& raster, std::span<const Pixel> pixels);

std::vector<SegmentStats> compute_all_stats(const Raster& raster, const SegmentMap& map);

// Per-feature affine normalisation v = (raw - shift) / scale.
struct FeatureNorm {
  std::vector<double> shift;
  std::vector<double> scale;

  static FeatureNorm identity(std::size_t dim);
  // z-score over the given rows; constant columns get scale 1.
  static FeatureNorm fit(std::span<const std::vector<double>> rows);
};

std::vector<double> feature_vector(const SegmentStats& stats, const FeatureNorm& norm);
std::vector<double> apply_norm(std::span<const double> raw, const FeatureNorm& norm);

std::vector<Pixel> to_pixels(std::span<const std::uint32_t> indices, int width);

}  // namespace deepmerge
