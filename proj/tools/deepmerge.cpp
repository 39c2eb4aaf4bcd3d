// deepmerge command-line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>

#include "deepmerge/compose.hpp"
#include "deepmerge/error.hpp"
#include "deepmerge/features.hpp"
#include "deepmerge/label_store.hpp"
#include "deepmerge/metrics.hpp"
#include "deepmerge/net.hpp"
#include "deepmerge/oversegment.hpp"
#include "deepmerge/pipeline.hpp"
#include "deepmerge/polygon.hpp"
#include "deepmerge/rag.hpp"
#include "deepmerge/raster_io.hpp"
#include "deepmerge/sampler.hpp"
#include "deepmerge/service.hpp"
#include "deepmerge/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace deepmerge;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

// Finds <dir>/<tile>.{png,ppm,pgm}.
fs::path find_image(const fs::path& dir, const std::string& tile) {
  for (const char* ext : {".png", ".ppm", ".pgm"}) {
    const fs::path p = dir / (tile + ext);
    if (fs::exists(p)) return p;
  }
  throw Error("no image for tile '" + tile + "' in " + dir.string());
}

void add_overseg_options(CLI::App* cmd, OversegConfig& cfg) {
  cmd->add_option("--grid", cfg.grid_step, "grid step in pixels")->capture_default_str();
  cmd->add_option("--tol,--tolerance", cfg.color_tolerance, "per-band colour tolerance")->capture_default_str();
  cmd->add_option("--min,--min-segment", cfg.min_segment, "minimum segment size in pixels")->capture_default_str();
}

std::string trace_json(const MergeTrace& trace) {
  json steps = json::array();
  for (const MergeStep& s : trace.steps) steps.push_back({s.a, s.b, s.weight});
  return json{{"steps", steps}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region merging with learned segment embeddings"};
  app.require_subcommand(1);

  // oversegment
  std::string os_image, os_out, os_external;
  OversegConfig os_cfg;
  auto* c_os = app.add_subcommand("oversegment", "grid over-segmentation of an image");
  c_os->add_option("--in,--image", os_image, "input raster (PNG/PPM/PGM)")->required();
  c_os->add_option("--external", os_external, "ingest an existing label raster (.segr) instead");
  c_os->add_option("--out", os_out, "output segment map (.segr)")->required();
  add_overseg_options(c_os, os_cfg);

  // centers
  std::string ce_image, ce_map, ce_out, ce_mosaic;
  SamplerConfig ce_sampler;
  auto* c_ce = app.add_subcommand("centers", "extraction centres and patch widths per segment");
  c_ce->add_option("--image,--img", ce_image, "raster, needed for --mosaic");
  c_ce->add_option("--map", ce_map)->required();
  c_ce->add_option("--out", ce_out, "JSON output")->required();
  c_ce->add_option("--mosaic", ce_mosaic, "debug image of the patches of the first segments");
  c_ce->add_option("--inner-ratio", ce_sampler.inner_ratio)->capture_default_str();
  c_ce->add_option("--outer-ratio", ce_sampler.outer_ratio)->capture_default_str();

  // features
  std::string fe_image, fe_map, fe_out;
  auto* c_fe = app.add_subcommand("features", "engineered per-segment features");
  c_fe->add_option("--img,--image", fe_image)->required();
  c_fe->add_option("--map", fe_map)->required();
  c_fe->add_option("--out", fe_out, "JSON Lines, one record per segment")->required();

  // train
  std::string tr_pairs, tr_dir, tr_out, tr_net, tr_variant;
  int tr_epochs = -1;
  long long tr_seed = -1;
  auto* c_tr = app.add_subcommand("train", "train the siamese embedding network from labelled pairs");
  c_tr->add_option("--pairs", tr_pairs, "label export (JSON Lines)")->required();
  c_tr->add_option("--img-dir", tr_dir, "directory with <tile>.png and <tile>.segr")->required();
  c_tr->add_option("--out", tr_out, "model file")->required();
  c_tr->add_option("--net", tr_net, "JSON file with network settings");
  c_tr->add_option("--variant", tr_variant, "TF, TF+MLE or TF+MLE+SFE");
  c_tr->add_option("--epochs", tr_epochs);
  c_tr->add_option("--seed", tr_seed);

  // embed
  std::string em_model, em_image, em_map, em_out;
  auto* c_em = app.add_subcommand("embed", "embed every segment of a map");
  c_em->add_option("--model", em_model)->required();
  c_em->add_option("--img,--image", em_image)->required();
  c_em->add_option("--map", em_map)->required();
  c_em->add_option("--out", em_out)->required();

  // merge
  std::string me_map, me_emb, me_out, me_trace, me_regions;
  double me_scale = 0.6;
  auto* c_me = app.add_subcommand("merge", "global-best region merging");
  c_me->add_option("--map", me_map)->required();
  c_me->add_option("--emb", me_emb)->required();
  c_me->add_option("--scale", me_scale)->capture_default_str();
  c_me->add_option("--out", me_out, "merged map (.segr)")->required();
  c_me->add_option("--trace", me_trace, "merge trace (JSON)");
  c_me->add_option("--regions", me_regions, "region features and weights, input to compose");

  // compose
  std::string co_manifest, co_out, co_regions;
  double co_scale = 0.6;
  auto* c_co = app.add_subcommand("compose", "merge regions across tile borders");
  c_co->add_option("--tiles", co_manifest, "manifest JSON")->required();
  c_co->add_option("--scale", co_scale)->capture_default_str();
  c_co->add_option("--out", co_out)->required();
  c_co->add_option("--regions", co_regions, "composed region table");

  // evaluate
  std::string ev_map, ev_refs, ev_out;
  bool ev_csv = false;
  auto* c_ev = app.add_subcommand("evaluate", "segmentation metrics against reference polygons");
  c_ev->add_option("--map", ev_map)->required();
  c_ev->add_option("--refs", ev_refs)->required();
  c_ev->add_option("--out", ev_out, "JSON report");
  c_ev->add_flag("--csv", ev_csv, "print a CSV header and row");

  // sweep
  std::string sw_map, sw_emb, sw_refs, sw_out;
  std::vector<double> sw_scales{0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
  auto* c_sw = app.add_subcommand("sweep", "metrics over a range of scales from one merge trace");
  c_sw->add_option("--map", sw_map)->required();
  c_sw->add_option("--emb", sw_emb)->required();
  c_sw->add_option("--refs", sw_refs)->required();
  c_sw->add_option("--scales", sw_scales)->delimiter(',');
  c_sw->add_option("--out", sw_out, "CSV output (stdout when omitted)");

  // hist
  std::string hi_map, hi_emb, hi_out;
  int hi_bins = 20;
  auto* c_hi = app.add_subcommand("hist", "histogram of adjacent-segment embedding distances");
  c_hi->add_option("--map", hi_map)->required();
  c_hi->add_option("--emb", hi_emb)->required();
  c_hi->add_option("--bins", hi_bins)->capture_default_str();
  c_hi->add_option("--out", hi_out, "JSON output (stdout when omitted)");

  // serve
  std::string se_config, se_host = "127.0.0.1", se_static, se_journal;
  std::vector<std::string> se_tiles;
  int se_port = 8080;
  auto* c_se = app.add_subcommand("serve", "HTTP labelling service");
  c_se->add_option("--config", se_config, "JSON: {tiles:[{id,image,map}], journal, static}");
  c_se->add_option("--tile", se_tiles, "id=image,map (repeatable)");
  c_se->add_option("--journal", se_journal, "label journal path");
  c_se->add_option("--static", se_static, "front-end asset directory");
  c_se->add_option("--host", se_host)->capture_default_str();
  c_se->add_option("--port", se_port)->capture_default_str();

  // synth
  std::string sy_out;
  std::uint64_t sy_seed = 7, sy_pair_seed = 11;
  std::size_t sy_pairs = 400;
  double sy_pos = 0.4;
  auto* c_sy = app.add_subcommand("synth", "write the synthetic test mosaic with references and labels");
  c_sy->add_option("--out", sy_out, "output directory")->required();
  c_sy->add_option("--seed", sy_seed)->capture_default_str();
  c_sy->add_option("--pairs", sy_pairs, "training pairs to derive")->capture_default_str();
  c_sy->add_option("--positive-fraction", sy_pos)->capture_default_str();
  c_sy->add_option("--pair-seed", sy_pair_seed)->capture_default_str();

  // pipeline / ablation
  std::string pi_config;
  auto* c_pi = app.add_subcommand("pipeline", "run the cached end-to-end pipeline");
  c_pi->add_option("--config", pi_config, "config file (default: $DEEPMERGE_CONFIG)");
  std::string ab_config;
  auto* c_ab = app.add_subcommand("ablation", "run the pipeline for TF, TF+MLE and TF+MLE+SFE");
  c_ab->add_option("--config", ab_config, "config file (default: $DEEPMERGE_CONFIG)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_os) {
      SegmentMap map;
      if (!os_external.empty()) {
        const Raster img = load_raster(os_image);
        map = ingest_external(load_label_image(os_external), &img);
      } else {
        map = oversegment(load_raster(os_image), os_cfg);
      }
      save_segment_map(map, os_out);
      std::cout << map.count() << " segments\n";
    } else if (*c_ce) {
      const SegmentMap map = load_segment_map(ce_map);
      const auto lists = map.pixel_lists();
      Raster img;
      if (!ce_mosaic.empty()) {
        if (ce_image.empty()) throw Error("centers: --mosaic needs --image");
        img = load_raster(ce_image);
      }
      json segs = json::array();
      std::vector<PatchSet> debug;
      for (std::uint32_t s = 0; s < map.count(); ++s) {
        const auto pixels = to_pixels(lists[s], map.width());
        const ExtractionCenters ec = extraction_centers(pixels, ce_sampler);
        const PatchWidths w = patch_widths(pixels, ec.centers.front(), ce_sampler);
        json centers = json::array();
        for (const Pixel& p : ec.centers) centers.push_back({p.x, p.y});
        segs.push_back({{"id", s}, {"centers", centers}, {"widths", {w.w1, w.w2, w.w3, w.w4}}});
        if (!ce_mosaic.empty() && debug.size() < 16) debug.push_back(patches_with_widths(img, ec.centers.front(), w));
      }
      write_text(ce_out, json{{"segments", segs}}.dump());
      if (!ce_mosaic.empty()) save_raster(patch_mosaic(debug), ce_mosaic);
    } else if (*c_fe) {
      const Raster img = load_raster(fe_image);
      const SegmentMap map = load_segment_map(fe_map);
      const auto stats = compute_all_stats(img, map);
      std::string out;
      for (std::uint32_t s = 0; s < map.count(); ++s) {
        const SegmentStats& st = stats[s];
        out += json{{"id", s},
                    {"n", st.n},
                    {"mean", st.mean},
                    {"std", st.std},
                    {"perimeter", st.perimeter},
                    {"mbr", {st.mbr_length, st.mbr_width}},
                    {"shape", st.shape},
                    {"compactness", st.compactness},
                    {"brightness", st.brightness},
                    {"border", st.border},
                    {"features", st.raw_features()}}
                   .dump() +
               "\n";
      }
      write_text(fe_out, out);
    } else if (*c_tr) {
      NetConfig cfg;
      if (!tr_net.empty()) cfg = net_config_from_json(slurp(tr_net));
      if (!tr_variant.empty()) cfg.variant = parse_variant(tr_variant);
      if (tr_epochs >= 0) cfg.epochs = tr_epochs;
      if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
      cfg.validate();
      const auto labels = read_labels(tr_pairs);
      std::map<std::string, std::pair<Raster, SegmentMap>> data;
      for (const LabelRecord& r : labels) {
        if (data.count(r.tile)) continue;
        data.emplace(r.tile, std::pair(load_raster(find_image(tr_dir, r.tile)),
                                       load_segment_map(fs::path(tr_dir) / (r.tile + ".segr"))));
      }
      std::vector<TrainingImage> images;
      for (const auto& [tile, d] : data) {
        images.push_back({&d.first, &d.second, pairs_for_tile(labels, tile, d.second)});
      }
      save_model(train_model(images, cfg, SamplerConfig{}), tr_out);
      std::cout << "trained on " << labels.size() << " pairs from " << images.size() << " tiles\n";
    } else if (*c_em) {
      const Model model = load_model(em_model);
      save_embeddings(embed_map(load_raster(em_image), load_segment_map(em_map), model), em_out);
    } else if (*c_me) {
      const SegmentMap map = load_segment_map(me_map);
      const RegionGraph graph = build_rag(map, load_embeddings(me_emb));
      const MergeResult r = run_merge(graph, me_scale);
      save_segment_map(apply_regions(map, r.region_of_node), me_out);
      if (!me_trace.empty()) write_text(me_trace, trace_json(r.trace));
      if (!me_regions.empty()) save_embeddings(region_table(r), me_regions);
      std::cout << map.count() << " segments -> " << r.region_count << " regions\n";
    } else if (*c_co) {
      // {"width": W, "height": H, "tiles": [{"x": 0, "y": 0, "map": "...segr", "regions": "...emb"}]}
      const json m = json::parse(slurp(co_manifest));
      const fs::path base = fs::path(co_manifest).parent_path();
      std::vector<TileResult> tiles;
      for (const auto& t : m.at("tiles")) {
        TileResult tr;
        tr.x0 = t.at("x");
        tr.y0 = t.at("y");
        tr.map = load_segment_map(resolve(base, t.at("map")));
        const EmbeddingTable reg = load_embeddings(resolve(base, t.at("regions")).string());
        if (reg.vectors.size() != tr.map.count()) throw Error("compose: region table does not match tile map");
        tr.features = reg.vectors;
        tr.weights.assign(reg.weights.begin(), reg.weights.end());
        tiles.push_back(std::move(tr));
      }
      const ComposeResult r = compose(tiles, m.at("width"), m.at("height"), co_scale);
      save_segment_map(r.map, co_out);
      if (!co_regions.empty()) {
        EmbeddingTable t;
        t.dim = r.features.empty() ? 0 : static_cast<int>(r.features[0].size());
        t.vectors = r.features;
        for (double w : r.weights) t.weights.push_back(static_cast<std::uint32_t>(std::llround(w)));
        save_embeddings(t, co_regions);
      }
      std::cout << r.border_nodes << " border regions, " << r.trace.steps.size() << " merges, " << r.map.count()
                << " regions\n";
    } else if (*c_ev) {
      const MetricsReport rep = evaluate(load_segment_map(ev_map), load_references(ev_refs));
      if (!ev_out.empty()) write_text(ev_out, rep.to_json());
      if (ev_csv) {
        std::cout << MetricsReport::csv_header() << "\n" << rep.csv_row() << "\n";
      } else if (ev_out.empty()) {
        std::cout << rep.to_json() << "\n";
      }
    } else if (*c_sw) {
      const SegmentMap map = load_segment_map(sw_map);
      const auto rows = sweep_scales(map, build_rag(map, load_embeddings(sw_emb)), sw_scales, load_references(sw_refs));
      const std::string csv = sweep_csv(rows);
      if (sw_out.empty()) {
        std::cout << csv;
      } else {
        write_text(sw_out, csv);
      }
    } else if (*c_hi) {
      const SegmentMap map = load_segment_map(hi_map);
      const std::string out = distance_histogram(build_rag(map, load_embeddings(hi_emb)), hi_bins).to_json();
      if (hi_out.empty()) {
        std::cout << out << "\n";
      } else {
        write_text(hi_out, out);
      }
    } else if (*c_se) {
      ServiceConfig cfg;
      if (!se_config.empty()) {
        const json j = json::parse(slurp(se_config));
        const fs::path base = fs::path(se_config).parent_path();
        for (const auto& t : j.at("tiles")) {
          cfg.tiles.push_back({t.at("id"), resolve(base, t.at("image")), resolve(base, t.at("map"))});
        }
        if (j.contains("journal")) cfg.journal = resolve(base, j.at("journal"));
        if (j.contains("static")) cfg.static_dir = resolve(base, j.at("static"));
      }
      for (const std::string& arg : se_tiles) {
        const auto eq = arg.find('='), comma = arg.find(',');
        if (eq == std::string::npos || comma == std::string::npos || comma < eq) {
          throw Error("--tile expects id=image,map");
        }
        cfg.tiles.push_back({arg.substr(0, eq), arg.substr(eq + 1, comma - eq - 1), arg.substr(comma + 1)});
      }
      if (!se_journal.empty()) cfg.journal = se_journal;
      if (!se_static.empty()) cfg.static_dir = se_static;
      if (cfg.tiles.empty()) throw Error("serve: no tiles configured");
      run_service(cfg, se_host, se_port);
    } else if (*c_sy) {
      const fs::path dir(sy_out);
      fs::create_directories(dir);
      const SynthScene scene = make_mosaic(sy_seed);
      const SegmentMap map = oversegment(scene.raster, OversegConfig{});
      const ReferenceRaster rr = rasterize_polygons(scene.refs, scene.raster.width, scene.raster.height);
      const PairSplit split = derive_pairs(map, majority_reference(map, rr), sy_pairs, sy_pos, sy_pair_seed);
      save_raster(scene.raster, dir / "mosaic.png");
      save_segment_map(map, dir / "mosaic.segr");
      save_references(scene.refs, dir / "refs.json");
      std::ofstream labels(dir / "labels.jsonl");
      for (const SamplePair& p : split.train) {
        LabelRecord r;
        r.tile = "mosaic";
        r.a = p.left;
        r.b = p.right;
        r.positive = p.alpha == 1;
        r.timestamp_ms = 1;
        r.annotator = "synth";
        labels << r.to_json_line() << "\n";
      }
      std::cout << map.count() << " segments, " << split.train.size() << " labelled pairs, "
                << scene.refs.polygons.size() << " references\n";
    } else if (*c_pi) {
      const PipelineOutputs out = run_pipeline(PipelineConfig::resolve(pi_config), &std::cerr);
      std::cout << "merged map: " << out.merged.string() << "\n";
      if (out.report) std::cout << MetricsReport::csv_header() << "\n" << out.report->csv_row() << "\n";
    } else if (*c_ab) {
      const PipelineConfig base = PipelineConfig::resolve(ab_config);
      if (base.references.empty()) throw Error("ablation: the config needs references");
      std::cout << "variant," << MetricsReport::csv_header() << "\n";
      for (Variant v : {Variant::Tf, Variant::TfMle, Variant::TfMleSfe}) {
        PipelineConfig cfg = base;
        cfg.net.variant = v;
        cfg.model.clear();
        const PipelineOutputs out = run_pipeline(cfg, &std::cerr);
        std::cout << variant_name(v) << "," << out.report->csv_row() << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
