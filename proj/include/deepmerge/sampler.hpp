#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "deepmerge/raster.hpp"

namespace deepmerge {

struct SamplerConfig {
  double inner_ratio = 0.90;  // P1: first width whose coverage ratio drops to this
  double outer_ratio = 0.30;  // P2
  int start_width = 5;
  int width_step = 5;
  std::size_t split_min_area = 64;  // segments at least this large get three centres

  void validate() const;
};

// Up to three extraction centres inside a segment: the interior pole of the
// whole segment, then (for large segments) the poles of the two halves of
// an area-balanced split across the long axis of its bounding rectangle.
struct ExtractionCenters {
  std::vector<Pixel> centers;
};

ExtractionCenters extraction_centers(std::span<const Pixel> segment, const SamplerConfig& cfg = {});

// Pixel of the set farthest (Euclidean) from any pixel outside it; ties go
// to the pixel nearest the centroid, then the smallest (y, x).
Pixel interior_pole(std::span<const Pixel> pixels);

struct PatchWidths {
  int w1 = 0;
  int w2 = 0;
  int w3 = 0;
  int w4 = 0;
};

// Growing-window search: coverage = |segment ∩ window| / width², counting
// only in-image segment pixels against the nominal window area.
PatchWidths patch_widths(std::span<const Pixel> segment, Pixel center, const SamplerConfig& cfg = {});
double coverage_ratio(std::span<const Pixel> segment, Pixel center, int width);

// Square window of `width` pixels; columns center.x - width/2 ... and the
// same for rows. Out-of-image pixels replicate the nearest edge pixel.
struct Patch {
  int width = 0;
  int bands = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int x, int y, int b) const { return data[(static_cast<std::size_t>(y) * width + x) * bands + b]; }
};

Patch extract_patch(const Raster& raster, Pixel center, int width);

struct PatchSet {
  Pixel center;
  PatchWidths widths;
  std::array<Patch, 4> levels;  // P1..P4
};

PatchSet patches_with_widths(const Raster& raster, Pixel center, const PatchWidths& widths);
PatchSet multi_level_patches(const SegmentMap& map, const Raster& raster, std::uint32_t segment, Pixel center,
                             const SamplerConfig& cfg = {});

// Patch sets for every extraction centre of a segment; widths are computed
// at the first centre and shared by the others.
std::vector<PatchSet> segment_patch_sets(const Raster& raster, std::span<const Pixel> segment,
                                         const SamplerConfig& cfg = {});

// Debug mosaic: the four levels of each patch set side by side, one row per set.
Raster patch_mosaic(std::span<const PatchSet> sets);

}  // namespace deepmerge
