#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace deepmerge {

struct Pixel {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// Band-interleaved 8-bit image, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  int bands = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int b);

  std::uint8_t at(int x, int y, int band) const {
    return data[(static_cast<std::size_t>(y) * width + x) * bands + band];
  }
  std::uint8_t& at(int x, int y, int band) {
    return data[(static_cast<std::size_t>(y) * width + x) * bands + band];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Unvalidated label raster, e.g. produced by an external segmenter.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> labels;
};

// Dense, 4-connected partition of the pixel grid into segments 0..count-1.
class SegmentMap {
 public:
  SegmentMap() = default;
  // Throws Error unless labels are dense and every segment is 4-connected.
  SegmentMap(int width, int height, std::vector<std::uint32_t> labels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint32_t count() const { return count_; }
  std::uint32_t label(int x, int y) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const std::uint32_t> labels() const { return labels_; }

  // Pixel indices (y * width + x) of each segment, in raster order.
  std::vector<std::vector<std::uint32_t>> pixel_lists() const;
  std::vector<std::uint64_t> areas() const;

  friend bool operator==(const SegmentMap&, const SegmentMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::uint32_t count_ = 0;
  std::vector<std::uint32_t> labels_;
};

// Checks the SegmentMap invariants without constructing one; returns an
// empty string when valid, otherwise the first violation.
std::string check_segment_labels(int width, int height, std::span<const std::uint32_t> labels);

// Renumbers labels to dense ids in order of first appearance (raster scan)
// and splits labels whose pixels are not 4-connected.
SegmentMap relabel_connected(const LabelImage& image);

// Sorted, unique adjacent label pairs (a < b) over 4-neighbourhoods.
std::vector<std::pair<std::uint32_t, std::uint32_t>> adjacent_pairs(const SegmentMap& map);

// Equality of two partitions up to label renumbering.
bool same_partition(const SegmentMap& a, const SegmentMap& b);

}  // namespace deepmerge
