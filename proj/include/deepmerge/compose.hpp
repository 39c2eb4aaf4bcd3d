#pragma once

#include <cstdint>
#include <vector>

#include "deepmerge/rag.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

// Merged result of one tile, placed at (x0, y0) in the mosaic.
struct TileResult {
  int x0 = 0;
  int y0 = 0;
  SegmentMap map;
  std::vector<std::vector<double>> features;  // per region of `map`
  std::vector<double> weights;
};

struct ComposeResult {
  SegmentMap map;
  std::vector<std::vector<double>> features;
  std::vector<double> weights;
  MergeTrace trace;  // node ids are (tile base + local region id), tiles in input order
  std::size_t border_nodes = 0;
};

// Cross-border merge: regions that touch another tile form the node set,
// all their mutual adjacencies form the edges, and run_merge is applied at
// `scale`. Regions touching no tile border keep their extent. Throws when
// the tiles do not partition the width x height mosaic.
ComposeResult compose(const std::vector<TileResult>& tiles, int width, int height, double scale);

// Splits a global result back into tiles along the given grid.
std::vector<TileResult> split_tiles(const SegmentMap& map, const std::vector<std::vector<double>>& features,
                                    const std::vector<double>& weights, const std::vector<int>& x_edges,
                                    const std::vector<int>& y_edges);

}  // namespace deepmerge
