#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "deepmerge/raster.hpp"

namespace deepmerge::testutil {

// Random dense 4-connected map built from random rectangles, then split
// into connected components.
inline SegmentMap random_map(std::mt19937_64& rng, int w, int h, int blocks) {
  LabelImage img{w, h, std::vector<std::uint32_t>(static_cast<std::size_t>(w) * h, 0)};
  std::uniform_int_distribution<int> X(0, w - 1), Y(0, h - 1);
  for (int k = 1; k <= blocks; ++k) {
    int x0 = X(rng), x1 = X(rng), y0 = Y(rng), y1 = Y(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) img.labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint32_t>(k);
    }
  }
  return relabel_connected(img);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("deepmerge_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace deepmerge::testutil
