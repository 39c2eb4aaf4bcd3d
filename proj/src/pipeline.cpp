#include "deepmerge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <thread>

#include "deepmerge/error.hpp"
#include "deepmerge/label_store.hpp"
#include "deepmerge/raster_io.hpp"

namespace deepmerge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration ---------------------------------------------------------

void PipelineConfig::validate() const {
  if (image.empty()) throw Error("config: image is required");
  if (!fs::exists(image)) throw Error("config: image not found: " + image.string());
  if (model.empty() && labels.empty()) throw Error("config: need either a model or a label file");
  if (!model.empty() && !fs::exists(model)) throw Error("config: model not found: " + model.string());
  if (model.empty() && !fs::exists(labels)) throw Error("config: labels not found: " + labels.string());
  if (!references.empty() && !fs::exists(references)) {
    throw Error("config: references not found: " + references.string());
  }
  if (!(scale >= 0)) throw Error("config: scale must be >= 0");
  if (tile_cols < 1 || tile_rows < 1) throw Error("config: tiles must be >= 1 in each direction");
  for (double s : sweep) {
    if (!(s >= 0)) throw Error("config: sweep scales must be >= 0");
  }
  overseg.validate();
  sampler.validate();
  net.validate();
}

std::string PipelineConfig::to_json() const {
  json j = {{"image", image.string()},
            {"tile_id", tile_id},
            {"labels", labels.string()},
            {"model", model.string()},
            {"references", references.string()},
            {"work_dir", work_dir.string()},
            {"scale", scale},
            {"tiles", {tile_cols, tile_rows}},
            {"sweep", sweep},
            {"overseg",
             {{"grid_step", overseg.grid_step},
              {"color_tolerance", overseg.color_tolerance},
              {"min_segment", overseg.min_segment}}},
            {"sampler",
             {{"inner_ratio", sampler.inner_ratio},
              {"outer_ratio", sampler.outer_ratio},
              {"start_width", sampler.start_width},
              {"width_step", sampler.width_step},
              {"split_min_area", sampler.split_min_area}}},
            {"net", json::parse(net_config_json(net))}};
  return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error("config: expected a JSON object");
    auto path = [&](const char* key) -> fs::path {
      if (!j.contains(key)) return {};
      fs::path p = j.at(key).get<std::string>();
      if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
      return base_dir / p;
    };
    c.image = path("image");
    c.labels = path("labels");
    c.model = path("model");
    c.references = path("references");
    if (j.contains("work_dir")) c.work_dir = path("work_dir");
    c.tile_id = j.value("tile_id", c.image.stem().string());
    c.scale = j.value("scale", c.scale);
    if (j.contains("tiles")) {
      const auto t = j.at("tiles").get<std::vector<int>>();
      if (t.size() != 2) throw Error("config: tiles must be [cols, rows]");
      c.tile_cols = t[0];
      c.tile_rows = t[1];
    }
    c.sweep = j.value("sweep", c.sweep);
    if (j.contains("overseg")) {
      const auto& o = j.at("overseg");
      c.overseg.grid_step = o.value("grid_step", c.overseg.grid_step);
      c.overseg.color_tolerance = o.value("color_tolerance", c.overseg.color_tolerance);
      c.overseg.min_segment = o.value("min_segment", c.overseg.min_segment);
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      c.sampler.inner_ratio = s.value("inner_ratio", c.sampler.inner_ratio);
      c.sampler.outer_ratio = s.value("outer_ratio", c.sampler.outer_ratio);
      c.sampler.start_width = s.value("start_width", c.sampler.start_width);
      c.sampler.width_step = s.value("width_step", c.sampler.width_step);
      c.sampler.split_min_area = s.value("split_min_area", c.sampler.split_min_area);
    }
    if (j.contains("net")) c.net = net_config_from_json(j.at("net").dump(), c.net);
    if (j.contains("variant")) c.net.variant = parse_variant(j.at("variant").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text, path.parent_path());
}

PipelineConfig PipelineConfig::resolve(const fs::path& path) {
  if (!path.empty()) return load(path);
  if (const char* env = std::getenv("DEEPMERGE_CONFIG"); env && *env) return load(env);
  throw Error("config: no config file given and DEEPMERGE_CONFIG is not set");
}

// ---- hashing ---------------------------------------------------------------

Fnv1a& Fnv1a::add(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ull;
  }
  return *this;
}

Fnv1a& Fnv1a::add_file(const fs::path& path) {
  const auto bytes = read_file(path);
  return add(bytes.data(), bytes.size());
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h_);
  return buf;
}

// ---- processing ------------------------------------------------------------

Model train_model(std::span<const TrainingImage> images, const NetConfig& cfg, const SamplerConfig& sampler) {
  Model m;
  m.sampler = sampler;
  std::vector<std::vector<double>> raw;
  for (const TrainingImage& im : images) {
    auto r = raw_segment_features(*im.raster, *im.map);
    raw.insert(raw.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  m.norm = FeatureNorm::fit(raw);
  TrainingSet set;
  for (const TrainingImage& im : images) {
    const auto base = static_cast<std::uint32_t>(set.segments.size());
    auto inputs = segment_inputs(*im.raster, *im.map, cfg, sampler, m.norm);
    set.segments.insert(set.segments.end(), std::make_move_iterator(inputs.begin()),
                        std::make_move_iterator(inputs.end()));
    for (SamplePair p : im.pairs) {
      p.left += base;
      p.right += base;
      set.pairs.push_back(p);
    }
  }
  m.params = train_siamese(set, cfg);
  return m;
}

Model train_model(const Raster& raster, const SegmentMap& map, std::span<const SamplePair> pairs, const NetConfig& cfg,
                  const SamplerConfig& sampler) {
  const TrainingImage im{&raster, &map, {pairs.begin(), pairs.end()}};
  return train_model(std::span(&im, 1), cfg, sampler);
}

std::vector<SamplePair> pairs_for_tile(std::span<const LabelRecord> labels, const std::string& tile,
                                       const SegmentMap& map) {
  const auto adj = adjacent_pairs(map);
  std::vector<SamplePair> out;
  for (const LabelRecord& r : labels) {
    if (r.tile != tile) continue;
    if (r.a >= map.count() || r.b >= map.count()) throw Error("label references an unknown segment in " + tile);
    if (!std::binary_search(adj.begin(), adj.end(), std::pair(std::min(r.a, r.b), std::max(r.a, r.b)))) {
      throw Error("label pair " + std::to_string(r.a) + "," + std::to_string(r.b) + " is not adjacent in " + tile);
    }
    out.push_back({r.a, r.b, r.positive ? 1 : 0});
  }
  if (out.empty()) throw Error("no labels for tile '" + tile + "'");
  return out;
}

EmbeddingTable region_table(const MergeResult& result) {
  EmbeddingTable t;
  t.dim = result.region_features.empty() ? 0 : static_cast<int>(result.region_features[0].size());
  t.vectors = result.region_features;
  for (double w : result.region_weights) t.weights.push_back(static_cast<std::uint32_t>(std::llround(w)));
  return t;
}

EmbeddingTable embed_map(const Raster& raster, const SegmentMap& map, const Model& model) {
  return embed_all(segment_inputs(raster, map, model.params.cfg, model.sampler, model.norm), model.params);
}

SingleResult process_image(const Raster& raster, const OversegConfig& overseg, const Model& model, double scale) {
  SingleResult r;
  r.segments = oversegment(raster, overseg);
  r.graph = build_rag(r.segments, embed_map(raster, r.segments, model));
  r.merge = run_merge(r.graph, scale);
  r.merged = apply_regions(r.segments, r.merge.region_of_node);
  return r;
}

ComposeResult process_tiles(const Raster& raster, const TileGrid& grid, const OversegConfig& overseg,
                            const Model& model, double scale) {
  const int n = grid.cols() * grid.rows();
  std::vector<TileResult> tiles(n);
  std::vector<std::string> errors(n);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i; (i = next++) < n;) {
      try {
        const int c = i % grid.cols(), r = i / grid.cols();
        TileResult& t = tiles[i];
        t.x0 = grid.x_edges[c];
        t.y0 = grid.y_edges[r];
        const Raster sub = crop(raster, t.x0, t.y0, grid.tile_width(c), grid.tile_height(r));
        SingleResult res = process_image(sub, overseg, model, scale);
        t.map = std::move(res.merged);
        t.features = std::move(res.merge.region_features);
        t.weights = std::move(res.merge.region_weights);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, n);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw Error("tile " + std::to_string(i) + ": " + errors[i]);
  }
  return compose(tiles, raster.width, raster.height, scale);
}

std::vector<SweepRow> sweep_scales(const SegmentMap& segments, const RegionGraph& graph,
                                   const std::vector<double>& scales, const ReferenceSet& refs) {
  std::vector<SweepRow> rows;
  if (scales.empty()) return rows;
  const MergeResult full = run_merge(graph, *std::max_element(scales.begin(), scales.end()));
  for (double s : scales) {
    const MergeResult r = replay(graph, full.trace, s);
    rows.push_back({s, r.region_count, evaluate(apply_regions(segments, r.region_of_node), refs)});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "scale,regions," + MetricsReport::csv_header() + "\n";
  char buf[64];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%zu,", r.scale, r.regions);
    out += buf + r.report.csv_row() + "\n";
  }
  return out;
}

Histogram distance_histogram(std::span<const double> distances, int bins) {
  if (bins < 1) throw Error("histogram: bins must be >= 1");
  Histogram h;
  h.counts.assign(bins, 0);
  for (double d : distances) h.max = std::max(h.max, d);
  for (double d : distances) {
    int b = h.max > 0 ? static_cast<int>(d / h.max * bins) : 0;
    ++h.counts[std::clamp(b, 0, bins - 1)];
  }
  return h;
}

Histogram distance_histogram(const RegionGraph& graph, int bins) {
  std::vector<double> d;
  d.reserve(graph.edges.size());
  for (const auto& [a, b] : graph.edges) d.push_back(edge_weight(graph.features[a], graph.features[b]));
  return distance_histogram(d, bins);
}

double band_mass(std::span<const double> values, double lo, double hi) {
  if (values.empty()) return 0.0;
  const auto n = std::count_if(values.begin(), values.end(), [&](double v) { return v >= lo && v < hi; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

std::string Histogram::to_json() const {
  const double width = counts.empty() ? 0.0 : max / static_cast<double>(counts.size());
  json edges = json::array();
  for (std::size_t i = 0; i <= counts.size(); ++i) edges.push_back(width * static_cast<double>(i));
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  return json{{"bins", counts.size()}, {"max", max}, {"edges", edges}, {"counts", counts}, {"total", total}}.dump();
}

// ---- orchestration ---------------------------------------------------------

namespace {

std::string trace_json(const MergeTrace& trace) {
  json steps = json::array();
  for (const MergeStep& s : trace.steps) steps.push_back({s.a, s.b, s.weight});
  return json{{"steps", steps}}.dump();
}

class StageRunner {
 public:
  StageRunner(fs::path dir, std::ostream* log) : dir_(std::move(dir)), log_(log) {}

  // Runs `make` unless the stage output for `key` exists already.
  template <typename F>
  fs::path run(const std::string& stage, const Fnv1a& key, const std::string& ext, F make) {
    const fs::path out = dir_ / (stage + "-" + key.hex() + ext);
    if (fs::exists(out)) {
      if (log_) *log_ << stage << ": cached " << out.filename().string() << "\n";
      return out;
    }
    const fs::path tmp = out.string() + ".tmp";
    try {
      make(tmp);
      fs::rename(tmp, out);
    } catch (const std::exception& e) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("stage " + stage + " failed (inputs " + key.hex() + "): " + e.what());
    }
    if (log_) *log_ << stage << ": wrote " << out.filename().string() << "\n";
    return out;
  }

 private:
  fs::path dir_;
  std::ostream* log_;
};

}  // namespace

PipelineOutputs run_pipeline(const PipelineConfig& cfg, std::ostream* log) {
  cfg.validate();
  fs::create_directories(cfg.work_dir);
  StageRunner stages(cfg.work_dir, log);
  PipelineOutputs out;
  const Raster raster = load_raster(cfg.image);

  Fnv1a seg_key;
  seg_key.add_file(cfg.image).add(json::parse(cfg.to_json()).at("overseg").dump());
  out.segments = stages.run("segments", seg_key, ".segr", [&](const fs::path& p) {
    save_segment_map(oversegment(raster, cfg.overseg), p);
  });
  const SegmentMap segments = load_segment_map(out.segments);

  if (!cfg.model.empty()) {
    out.model = cfg.model;
  } else {
    Fnv1a key = seg_key;
    key.add_file(cfg.labels).add(cfg.tile_id).add(net_config_json(cfg.net));
    key.add(json::parse(cfg.to_json()).at("sampler").dump());
    out.model = stages.run("model", key, ".bin", [&](const fs::path& p) {
      const auto pairs = pairs_for_tile(read_labels(cfg.labels), cfg.tile_id, segments);
      save_model(train_model(raster, segments, pairs, cfg.net, cfg.sampler), p.string());
    });
  }
  const Model model = load_model(out.model.string());

  Fnv1a emb_key = seg_key;
  emb_key.add_file(out.model);
  out.embeddings = stages.run("embed", emb_key, ".emb", [&](const fs::path& p) {
    save_embeddings(embed_map(raster, segments, model), p.string());
  });
  const RegionGraph graph = build_rag(segments, load_embeddings(out.embeddings.string()));

  Fnv1a merge_key = emb_key;
  merge_key.add(&cfg.scale, sizeof(double)).add(&cfg.tile_cols, sizeof(int)).add(&cfg.tile_rows, sizeof(int));
  fs::path trace_path = cfg.work_dir / ("trace-" + merge_key.hex() + ".json");
  out.merged = stages.run("merge", merge_key, ".segr", [&](const fs::path& p) {
    if (cfg.tile_cols == 1 && cfg.tile_rows == 1) {
      const MergeResult r = run_merge(graph, cfg.scale);
      write_text(trace_path, trace_json(r.trace));
      save_segment_map(apply_regions(segments, r.region_of_node), p);
    } else {
      const TileGrid grid = TileGrid::uniform(raster.width, raster.height, cfg.tile_cols, cfg.tile_rows);
      const ComposeResult r = process_tiles(raster, grid, cfg.overseg, model, cfg.scale);
      write_text(trace_path, trace_json(r.trace));
      save_segment_map(r.map, p);
    }
  });
  out.trace = trace_path;

  if (!cfg.references.empty()) {
    const ReferenceSet refs = load_references(cfg.references);
    const MetricsReport rep = evaluate(load_segment_map(out.merged), refs);
    write_text(cfg.work_dir / "report.json", rep.to_json());
    write_text(cfg.work_dir / "report.csv", MetricsReport::csv_header() + "\n" + rep.csv_row() + "\n");
    out.report = rep;
    if (log) *log << "evaluate: F=" << rep.f << " TE=" << rep.te << " ED2=" << rep.ed2 << "\n";
    if (!cfg.sweep.empty()) {
      out.sweep = sweep_scales(segments, graph, cfg.sweep, refs);
      write_text(cfg.work_dir / "sweep.csv", sweep_csv(out.sweep));
      if (log) *log << "sweep: " << out.sweep.size() << " scales\n";
    }
  }
  return out;
}

}  // namespace deepmerge
