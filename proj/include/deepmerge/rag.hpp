#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "deepmerge/net.hpp"
#include "deepmerge/raster.hpp"

namespace deepmerge {

// Region adjacency graph. Nodes start as segments (or per-tile regions);
// edge weights are Euclidean distances between node features.
struct RegionGraph {
  std::vector<std::vector<double>> features;
  std::vector<double> weights;  // centre counts; merge weights of the feature update
  std::vector<std::uint64_t> areas;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // a < b, sorted, unique

  std::size_t size() const { return features.size(); }
  void validate() const;
};

RegionGraph make_graph(std::vector<std::vector<double>> features, std::vector<double> weights,
                       std::vector<std::pair<std::uint32_t, std::uint32_t>> edges, std::vector<std::uint64_t> areas = {});

// One node per segment, an edge per pair of 4-adjacent segments.
RegionGraph build_rag(const SegmentMap& map, const EmbeddingTable& embeddings);

double edge_weight(std::span<const double> a, std::span<const double> b);

struct MergedFeature {
  std::vector<double> feature;
  double weight = 0.0;
};

// (M f_l + N f_r) / (M + N) with weight M + N.
MergedFeature merge_features(std::span<const double> left, double m, std::span<const double> right, double n);

struct MergeStep {
  std::uint32_t step = 0;
  std::uint32_t a = 0;  // surviving id (the smaller)
  std::uint32_t b = 0;
  double weight = 0.0;
};

struct MergeTrace {
  std::vector<MergeStep> steps;
};

struct MergeResult {
  std::vector<std::uint32_t> region_of_node;  // dense region ids, ordered by smallest member node
  std::uint32_t region_count = 0;
  std::vector<std::vector<double>> region_features;
  std::vector<double> region_weights;
  std::vector<std::uint64_t> region_areas;
  MergeTrace trace;
};

// Global-best merging: repeatedly merges the minimum edge under the order
// (weight, smaller id, larger id) until that weight exceeds `scale`. The
// minimum is found through mutual nearest-neighbour pairs kept in a heap
// with version stamps.
MergeResult run_merge(const RegionGraph& graph, double scale);

// Executes the given merges in order; each (a, b) must name two current,
// adjacent region representatives (the smallest node id of the region).
MergeResult apply_merges(const RegionGraph& graph, std::span<const MergeStep> steps);

// Prefix of `trace` up to (excluding) the first step with weight > scale.
MergeResult replay(const RegionGraph& graph, const MergeTrace& trace, double scale);

// Relabels a segment map by the region of each segment.
SegmentMap apply_regions(const SegmentMap& map, std::span<const std::uint32_t> region_of_segment);

}  // namespace deepmerge
