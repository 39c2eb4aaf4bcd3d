#pragma once

#include <cstdint>
#include <string>

#include "deepmerge/polygon.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  double gose = 0.0;
  double guse = 0.0;
  double te = 0.0;
  double pse = 0.0;
  double nsr = 0.0;
  double ed2 = 0.0;
  std::uint64_t n_references = 0;  // N, references with at least one pixel
  std::uint64_t m_segments = 0;    // M, segments intersecting some reference
  std::uint64_t v_corresponding = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Nine area-based scores of a segmentation against reference polygons.
// Only segments that intersect a reference enter precision. Per-reference
// terms:
//   S_max(R_i): segment with the largest overlap (ties: smaller label)
//   GOSE  |R_i| |R_i \ S_max| / (|R_i| - 1), zero when |R_i| = 1
//   GUSE  min(|R_i u S_ij| - |R_i n S_ij|, |R_i|), S_ij the union of the
//         segments meeting R_i
//   PSE   |S_max \ R_i|
// V counts segments overlapping some reference by at least half of either
// area. Throws when refs is empty or a vertex lies outside the image.
MetricsReport evaluate(const SegmentMap& map, const ReferenceSet& refs);

// Same, from an already rasterised reference owner map.
MetricsReport evaluate_raster(const SegmentMap& map, const ReferenceRaster& refs);

}  // namespace deepmerge
