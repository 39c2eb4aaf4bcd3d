#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepmerge/net.hpp"
#include "deepmerge/polygon.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

// Generated test scene: fields, a road band, rectangles and ellipses with
// per-class colour and texture noise, plus its reference polygons. Some
// fields are diagonally striped with one stripe colour equal to a plain
// field class, so they are only separable with context.
struct SynthScene {
  Raster raster;
  ReferenceSet refs;
  std::vector<std::string> object_class;  // per reference polygon
};

SynthScene make_mosaic(std::uint64_t seed = 7);

// Reference index covering most pixels of each segment (kNoReference when
// a segment lies outside every reference); ties go to the smaller index.
std::vector<std::int32_t> majority_reference(const SegmentMap& map, const ReferenceRaster& refs);

struct PairSplit {
  std::vector<SamplePair> train;
  std::vector<SamplePair> held_out;
};

// Labels adjacent segment pairs by whether their majority references agree
// and draws a training sample of about `n_train` pairs with the requested
// positive fraction; every other labelled adjacent pair is held out.
// Positives are drawn round-robin across references and negatives across
// reference pairs, so every boundary type is represented.
PairSplit derive_pairs(const SegmentMap& map, const std::vector<std::int32_t>& owner, std::size_t n_train,
                       double positive_fraction, std::uint64_t seed);

}  // namespace deepmerge
