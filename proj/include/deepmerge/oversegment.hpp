#pragma once

#include "deepmerge/raster.hpp"

namespace deepmerge {

struct OversegConfig {
  int grid_step = 16;
  int color_tolerance = 12;  // max per-band distance to the component seed
  int min_segment = 4;       // pixels

  void validate() const;
};

// Grid-seeded connected-component over-segmentation. Within each grid cell
// a component collects 4-connected pixels within color_tolerance of its
// seed (first unlabelled pixel in raster order); components smaller than
// min_segment are absorbed into the touching neighbour with the closest
// mean colour.
SegmentMap oversegment(const Raster& raster, const OversegConfig& cfg);

// Dense relabelling of an external segmentation with 4-connectivity
// enforced. Throws when the companion raster has other dimensions.
SegmentMap ingest_external(const LabelImage& labels, const Raster* companion = nullptr);

}  // namespace deepmerge
