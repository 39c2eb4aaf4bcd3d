#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "deepmerge/label_store.hpp"
#include "deepmerge/raster.hpp"

namespace httplib {
class Server;
}

namespace deepmerge {

struct TileSource {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path map;
};

struct ServiceConfig {
  std::vector<TileSource> tiles;
  std::filesystem::path journal = "labels.jsonl";
  std::filesystem::path static_dir;  // optional front-end assets
};

// HTTP API for pair labelling:
//   GET  /api/tiles
//   GET  /api/tiles/{id}/image.png
//   GET  /api/tiles/{id}/segments.json   boundary polygons + adjacency
//   POST /api/labels                     {tile, a, b, label[, annotator]}
//   POST /api/labels/undo
//   GET  /api/labels/export              JSON Lines
class LabelService {
 public:
  explicit LabelService(const ServiceConfig& cfg);
  ~LabelService();

  void register_routes(httplib::Server& server);
  LabelStore& store() { return *store_; }

 private:
  struct Tile {
    std::string id;
    int width = 0;
    int height = 0;
    std::uint32_t segments = 0;
    std::string png;
    std::string segments_json;
    std::set<std::pair<std::uint32_t, std::uint32_t>> adjacency;
  };

  std::map<std::string, Tile> tiles_;
  std::unique_ptr<LabelStore> store_;
  std::filesystem::path static_dir_;
};

// Blocks serving on host:port until the process is stopped.
void run_service(const ServiceConfig& cfg, const std::string& host, int port);

}  // namespace deepmerge
