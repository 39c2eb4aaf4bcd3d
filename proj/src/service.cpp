#include "deepmerge/service.hpp"

#include <httplib.h>

#include <iostream>
#include <json.hpp>

#include "deepmerge/error.hpp"
#include "deepmerge/polygon.hpp"
#include "deepmerge/raster_io.hpp"

namespace deepmerge {

namespace {

nlohmann::json ring_json(const Ring& r) {
  nlohmann::json a = nlohmann::json::array();
  for (const Point2& p : r) a.push_back({p.x, p.y});
  return a;
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
}

}  // namespace

LabelService::LabelService(const ServiceConfig& cfg)
    : store_(std::make_unique<LabelStore>(cfg.journal)), static_dir_(cfg.static_dir) {
  for (const TileSource& src : cfg.tiles) {
    if (tiles_.count(src.id)) throw Error("service: duplicate tile id " + src.id);
    const Raster img = load_raster(src.image);
    const SegmentMap map = load_segment_map(src.map);
    if (img.width != map.width() || img.height != map.height()) {
      throw Error("service: tile " + src.id + " image and map sizes differ");
    }
    Tile t;
    t.id = src.id;
    t.width = map.width();
    t.height = map.height();
    t.segments = map.count();
    const auto png = encode_png(img);
    t.png.assign(png.begin(), png.end());
    nlohmann::json polys = nlohmann::json::array();
    for (const Polygon& p : trace_boundaries(map).polygons) {
      nlohmann::json holes = nlohmann::json::array();
      for (const Ring& h : p.holes) holes.push_back(ring_json(h));
      polys.push_back({{"id", p.id}, {"ring", ring_json(p.exterior)}, {"holes", holes}});
    }
    nlohmann::json adj = nlohmann::json::array();
    for (const auto& pr : adjacent_pairs(map)) {
      t.adjacency.insert(pr);
      adj.push_back({pr.first, pr.second});
    }
    t.segments_json = nlohmann::json{{"tile", t.id},
                                     {"width", t.width},
                                     {"height", t.height},
                                     {"count", t.segments},
                                     {"polygons", polys},
                                     {"adjacency", adj}}
                          .dump();
    tiles_.emplace(t.id, std::move(t));
  }
}

LabelService::~LabelService() = default;

void LabelService::register_routes(httplib::Server& server) {
  server.Get("/api/tiles", [this](const httplib::Request&, httplib::Response& res) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [id, t] : tiles_) {
      a.push_back({{"id", id}, {"width", t.width}, {"height", t.height}, {"segments", t.segments}});
    }
    res.set_content(a.dump(), "application/json");
  });

  server.Get(R"(/api/tiles/([^/]+)/image\.png)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto it = tiles_.find(req.matches[1]);
    if (it == tiles_.end()) return send_error(res, 404, "unknown tile");
    res.set_content(it->second.png, "image/png");
  });

  server.Get(R"(/api/tiles/([^/]+)/segments\.json)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto it = tiles_.find(req.matches[1]);
    if (it == tiles_.end()) return send_error(res, 404, "unknown tile");
    res.set_content(it->second.segments_json, "application/json");
  });

  server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains("tile") || !body.contains("a") || !body.contains("b") ||
        !body.contains("label") || !body["tile"].is_string() || !body["a"].is_number_unsigned() ||
        !body["b"].is_number_unsigned() || !body["label"].is_string()) {
      return send_error(res, 400, "expected {tile, a, b, label}");
    }
    const std::string label = body["label"];
    if (label != "positive" && label != "negative") return send_error(res, 400, "label must be positive or negative");
    const auto it = tiles_.find(body["tile"].get<std::string>());
    if (it == tiles_.end()) return send_error(res, 404, "unknown tile");
    const std::uint64_t a = body["a"], b = body["b"];
    if (a >= it->second.segments || b >= it->second.segments) return send_error(res, 404, "unknown segment");
    const auto key = std::pair(static_cast<std::uint32_t>(std::min(a, b)), static_cast<std::uint32_t>(std::max(a, b)));
    if (a == b || !it->second.adjacency.count(key)) return send_error(res, 409, "segments are not adjacent");
    LabelRecord r;
    r.tile = it->first;
    r.a = static_cast<std::uint32_t>(a);
    r.b = static_cast<std::uint32_t>(b);
    r.positive = label == "positive";
    r.annotator = body.value("annotator", std::string{});
    try {
      r = store_->append(r);
    } catch (const Error& e) {
      return send_error(res, 500, e.what());
    }
    res.set_content(r.to_json_line(), "application/json");
  });

  server.Post("/api/labels/undo", [this](const httplib::Request&, httplib::Response& res) {
    const bool undone = store_->undo();
    res.set_content(nlohmann::json{{"undone", undone}, {"count", store_->live().size()}}.dump(), "application/json");
  });

  server.Get("/api/labels/export", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(store_->export_jsonl(), "application/x-ndjson");
  });

  if (!static_dir_.empty()) server.set_mount_point("/", static_dir_.string());
}

void run_service(const ServiceConfig& cfg, const std::string& host, int port) {
  LabelService service(cfg);
  httplib::Server server;
  service.register_routes(server);
  std::cerr << "serving " << cfg.tiles.size() << " tiles on http://" << host << ":" << port << "\n";
  if (!server.listen(host, port)) throw Error("service: cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace deepmerge
