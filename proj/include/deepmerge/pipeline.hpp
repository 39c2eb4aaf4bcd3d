#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepmerge/compose.hpp"
#include "deepmerge/label_store.hpp"
#include "deepmerge/metrics.hpp"
#include "deepmerge/net.hpp"
#include "deepmerge/oversegment.hpp"
#include "deepmerge/polygon.hpp"
#include "deepmerge/rag.hpp"
#include "deepmerge/sampler.hpp"

namespace deepmerge {

// Configuration file schema (JSON, every key optional except "image"):
//   {
//     "image": "scene.png",            input raster
//     "tile_id": "scene",              label records with this tile id train the model
//     "labels": "labels.jsonl",        label export; required unless "model" is given
//     "model": "model.bin",            pretrained model; skips training
//     "references": "refs.json",       enables evaluation
//     "work_dir": "work",              stage cache and outputs
//     "scale": 0.6,
//     "variant": "TF+MLE+SFE",         overrides net.variant
//     "tiles": [2, 2],                 cols x rows; per-tile merge then compose
//     "sweep": [0.1, 0.3, ...],        scales for the sweep report
//     "overseg": {"grid_step": 16, "color_tolerance": 12, "min_segment": 4},
//     "sampler": {"inner_ratio": 0.9, "outer_ratio": 0.3, ...},
//     "net": {"dim": 32, "layers": 2, "epochs": 50, ...}
//   }
// Relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path image;
  std::string tile_id;
  std::filesystem::path labels;
  std::filesystem::path model;
  std::filesystem::path references;
  std::filesystem::path work_dir = "deepmerge_work";
  double scale = 0.6;
  int tile_cols = 1;
  int tile_rows = 1;
  std::vector<double> sweep;
  OversegConfig overseg;
  SamplerConfig sampler;
  NetConfig net;

  void validate() const;
  std::string to_json() const;
  static PipelineConfig from_json(const std::string& text, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  // Uses `path` when non-empty, otherwise $DEEPMERGE_CONFIG; throws when neither is set.
  static PipelineConfig resolve(const std::filesystem::path& path);
};

// 64-bit FNV-1a, used as the stage cache key.
class Fnv1a {
 public:
  Fnv1a& add(const void* data, std::size_t n);
  Fnv1a& add(const std::string& s) { return add(s.data(), s.size()); }
  Fnv1a& add_file(const std::filesystem::path& path);
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

struct TrainingImage {
  const Raster* raster = nullptr;
  const SegmentMap* map = nullptr;
  std::vector<SamplePair> pairs;  // segment ids local to `map`
};

// Feature normalisation is fitted over the segments of all images.
Model train_model(std::span<const TrainingImage> images, const NetConfig& cfg, const SamplerConfig& sampler);
Model train_model(const Raster& raster, const SegmentMap& map, std::span<const SamplePair> pairs, const NetConfig& cfg,
                  const SamplerConfig& sampler);

// Label records of one tile as sample pairs; throws on unknown or
// non-adjacent segments and when the tile has no labels.
std::vector<SamplePair> pairs_for_tile(std::span<const LabelRecord> labels, const std::string& tile,
                                       const SegmentMap& map);

// Region features and integer centre-count weights of a merge result.
EmbeddingTable region_table(const MergeResult& result);

EmbeddingTable embed_map(const Raster& raster, const SegmentMap& map, const Model& model);

struct SingleResult {
  SegmentMap segments;
  RegionGraph graph;
  MergeResult merge;
  SegmentMap merged;
};

SingleResult process_image(const Raster& raster, const OversegConfig& overseg, const Model& model, double scale);

// Per-tile over-segmentation, embedding and merging, then composition.
// Tiles run on worker threads.
ComposeResult process_tiles(const Raster& raster, const TileGrid& grid, const OversegConfig& overseg,
                            const Model& model, double scale);

struct SweepRow {
  double scale = 0;
  std::size_t regions = 0;
  MetricsReport report;
};

// One merge at the largest scale, then trace replay for every scale.
std::vector<SweepRow> sweep_scales(const SegmentMap& segments, const RegionGraph& graph,
                                   const std::vector<double>& scales, const ReferenceSet& refs);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct Histogram {
  double max = 0;
  std::vector<std::uint64_t> counts;
  std::string to_json() const;
};

// Fixed-width bins over [0, max edge weight]; the maximum lands in the last bin.
Histogram distance_histogram(const RegionGraph& graph, int bins = 20);
Histogram distance_histogram(std::span<const double> distances, int bins = 20);
// Fraction of values in [lo, hi).
double band_mass(std::span<const double> values, double lo, double hi);

struct PipelineOutputs {
  std::filesystem::path segments;
  std::filesystem::path model;
  std::filesystem::path embeddings;
  std::filesystem::path merged;
  std::filesystem::path trace;
  std::optional<MetricsReport> report;
  std::vector<SweepRow> sweep;
};

// oversegment -> train (unless a model is given) -> embed -> merge
// (-> compose) -> evaluate -> sweep. Each stage is keyed by a hash of its
// inputs and reused from work_dir when present. `log` receives one line
// per stage.
PipelineOutputs run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr);

}  // namespace deepmerge
