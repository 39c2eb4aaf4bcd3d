#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "deepmerge/error.hpp"
#include "deepmerge/pipeline.hpp"
#include "deepmerge/raster_io.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace deepmerge;

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(Fnv1a().value(), 0xcbf29ce484222325ull);
  EXPECT_EQ(Fnv1a().add("a").value(), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(Fnv1a().add("foobar").value(), 0x85944171f73967e8ull);
  EXPECT_EQ(Fnv1a().add("a").hex(), "af63dc4c8601ec8c");
}

TEST(PipelineConfig, JsonPathsAndOverrides) {
  const auto dir = testutil::temp_dir("config");
  const PipelineConfig c = PipelineConfig::from_json(
      R"({"image": "img.png", "labels": "/abs/l.jsonl", "scale": 0.4, "tiles": [2, 3],
          "variant": "TF+MLE", "net": {"epochs": 7}, "overseg": {"grid_step": 8}, "sweep": [0.1, 0.2]})",
      dir);
  EXPECT_EQ(c.image, dir / "img.png");
  EXPECT_EQ(c.labels, std::filesystem::path("/abs/l.jsonl"));
  EXPECT_EQ(c.tile_id, "img");
  EXPECT_DOUBLE_EQ(c.scale, 0.4);
  EXPECT_EQ(c.tile_cols, 2);
  EXPECT_EQ(c.tile_rows, 3);
  EXPECT_EQ(c.net.variant, Variant::TfMle);
  EXPECT_EQ(c.net.epochs, 7);
  EXPECT_EQ(c.overseg.grid_step, 8);
  EXPECT_EQ(c.sweep.size(), 2u);
  EXPECT_THROW(PipelineConfig::from_json(R"({"tiles": [1]})"), Error);
  EXPECT_THROW(PipelineConfig::from_json("[1, 2"), Error);
  // Missing image file.
  EXPECT_THROW(c.validate(), Error);
}

TEST(PipelineConfig, ResolveFallsBackToEnvironment) {
  const auto dir = testutil::temp_dir("config_env");
  write_text(dir / "c.json", R"({"image": "x.png", "scale": 0.3})");
  ::unsetenv("DEEPMERGE_CONFIG");
  EXPECT_THROW(PipelineConfig::resolve({}), Error);
  ::setenv("DEEPMERGE_CONFIG", (dir / "c.json").c_str(), 1);
  const PipelineConfig c = PipelineConfig::resolve({});
  EXPECT_DOUBLE_EQ(c.scale, 0.3);
  EXPECT_EQ(c.image, dir / "x.png");
  ::unsetenv("DEEPMERGE_CONFIG");
}

TEST(Histogram, CountsAndBands) {
  std::mt19937_64 rng(41);
  const RegionGraph g = oracle::random_graph(rng, 50, 60, 2, false);
  const Histogram h = distance_histogram(g, 10);
  ASSERT_EQ(h.counts.size(), 10u);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}), g.edges.size());
  const std::vector<double> v{0.0, 0.5, 1.0, 1.0};
  const Histogram hv = distance_histogram(v, 2);
  EXPECT_DOUBLE_EQ(hv.max, 1.0);
  EXPECT_EQ(hv.counts, (std::vector<std::uint64_t>{1, 3}));
  EXPECT_DOUBLE_EQ(band_mass(v, 0.0, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(band_mass(v, 0.5, 2.0), 0.75);
}

TEST(Sweep, ZeroScaleIsUnmergedAndRowsFollowReplay) {
  std::mt19937_64 rng(42);
  const SegmentMap map = testutil::random_map(rng, 40, 40, 25);
  EmbeddingTable emb{1, std::vector<std::uint32_t>(map.count(), 1), {}};
  for (std::uint32_t i = 0; i < map.count(); ++i) emb.vectors.push_back({static_cast<double>(rng() % 5) * 0.2});
  const RegionGraph g = build_rag(map, emb);
  const ReferenceSet refs = oracle::rect_reference_set({{0, 0, 20, 20}, {20, 0, 40, 40}});
  const auto rows = sweep_scales(map, g, {0.0, 0.3, 0.9}, refs);
  ASSERT_EQ(rows.size(), 3u);
  // Equal features merge even at scale 0; compare against a direct run.
  for (const SweepRow& row : rows) {
    const MergeResult r = run_merge(g, row.scale);
    EXPECT_EQ(row.regions, r.region_count);
    EXPECT_DOUBLE_EQ(row.report.f, evaluate(apply_regions(map, r.region_of_node), refs).f);
  }
  const std::string csv = sweep_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("scale,regions,", 0), 0u);
}

namespace {

// Two-colour 48x32 scene, its labels file and a tiny-network config.
PipelineConfig tiny_project(const std::filesystem::path& dir) {
  Raster img(48, 32, 3);
  std::mt19937_64 rng(5);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      for (int b = 0; b < 3; ++b) img.at(x, y, b) = static_cast<std::uint8_t>((x < 24 ? 60 : 190) + rng() % 5);
    }
  }
  save_raster(img, dir / "scene.png");
  PipelineConfig cfg = PipelineConfig::from_json(R"({
    "image": "scene.png", "labels": "labels.jsonl", "references": "refs.json", "work_dir": "work",
    "scale": 0.5, "sweep": [0.0, 0.5],
    "overseg": {"grid_step": 8, "color_tolerance": 12, "min_segment": 4},
    "net": {"dim": 8, "layers": 1, "heads": 2, "mlp_dim": 16, "embed_dim": 4, "epochs": 3}})",
                                                 dir);
  const SegmentMap map = oversegment(img, cfg.overseg);
  LabelStore store(dir / "labels.jsonl");
  const auto lists = map.pixel_lists();
  for (const auto& [a, b] : adjacent_pairs(map)) {
    LabelRecord r;
    r.tile = "scene";
    r.a = a;
    r.b = b;
    r.positive = (lists[a][0] % 48 < 24) == (lists[b][0] % 48 < 24);
    r.timestamp_ms = 1;
    store.append(r);
  }
  save_references(oracle::rect_reference_set({{0, 0, 24, 32}, {24, 0, 48, 32}}), dir / "refs.json");
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Pipeline, RerunIsCachedAndDeterministic) {
  const auto dir = testutil::temp_dir("pipeline");
  const PipelineConfig cfg = tiny_project(dir);
  std::ostringstream log1, log2;
  const PipelineOutputs a = run_pipeline(cfg, &log1);
  ASSERT_TRUE(a.report.has_value());
  EXPECT_EQ(a.sweep.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "work" / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "work" / "sweep.csv"));
  EXPECT_EQ(log1.str().find("cached"), std::string::npos);

  const PipelineOutputs b = run_pipeline(cfg, &log2);
  EXPECT_NE(log2.str().find("merge: cached"), std::string::npos);
  EXPECT_EQ(a.merged, b.merged);

  // A fresh work directory recomputes every stage to the same bytes.
  PipelineConfig fresh = cfg;
  fresh.work_dir = dir / "work2";
  const PipelineOutputs c = run_pipeline(fresh, nullptr);
  EXPECT_EQ(slurp(a.model), slurp(c.model));
  EXPECT_EQ(slurp(a.embeddings), slurp(c.embeddings));
  EXPECT_EQ(slurp(a.merged), slurp(c.merged));
  EXPECT_EQ(slurp(a.trace), slurp(c.trace));
}

TEST(Pipeline, TiledRunComposes) {
  const auto dir = testutil::temp_dir("pipeline_tiles");
  PipelineConfig cfg = tiny_project(dir);
  cfg.tile_cols = 2;
  cfg.tile_rows = 2;
  cfg.sweep.clear();
  const PipelineOutputs out = run_pipeline(cfg, nullptr);
  const SegmentMap merged = load_segment_map(out.merged);
  EXPECT_EQ(merged.width(), 48);
  EXPECT_TRUE(out.report.has_value());
}

TEST(Pipeline, StageFailureNamesStage) {
  const auto dir = testutil::temp_dir("pipeline_fail");
  PipelineConfig cfg = tiny_project(dir);
  cfg.tile_id = "other";  // no labels for this tile
  try {
    run_pipeline(cfg, nullptr);
    FAIL() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage model failed"), std::string::npos) << e.what();
  }
}

TEST(PairsForTile, ChecksAdjacency) {
  const SegmentMap map(3, 1, {0, 1, 2});
  LabelRecord r;
  r.tile = "t";
  r.a = 0;
  r.b = 1;
  r.positive = true;
  EXPECT_EQ(pairs_for_tile(std::vector<LabelRecord>{r}, "t", map).size(), 1u);
  r.b = 2;
  EXPECT_THROW(pairs_for_tile(std::vector<LabelRecord>{r}, "t", map), Error);
  EXPECT_THROW(pairs_for_tile(std::vector<LabelRecord>{}, "t", map), Error);
}
