#include "deepmerge/compose.hpp"

#include <algorithm>
#include <limits>

#include "deepmerge/error.hpp"
#include "deepmerge/polygon.hpp"

namespace deepmerge {

ComposeResult compose(const std::vector<TileResult>& tiles, int width, int height, double scale) {
  if (tiles.empty()) throw Error("compose: no tiles");
  if (width <= 0 || height <= 0) throw Error("compose: empty mosaic");
  const std::size_t npx = static_cast<std::size_t>(width) * height;
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();

  std::vector<std::uint32_t> node(npx, kUnset);
  std::vector<std::uint32_t> tile_of(npx, 0);
  std::vector<std::vector<double>> features;
  std::vector<double> weights;
  std::uint32_t base = 0;
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const TileResult& tr = tiles[t];
    const SegmentMap& m = tr.map;
    if (tr.features.size() != m.count() || tr.weights.size() != m.count()) {
      throw Error("compose: tile " + std::to_string(t) + " region table does not match its map");
    }
    if (tr.x0 < 0 || tr.y0 < 0 || tr.x0 + m.width() > width || tr.y0 + m.height() > height) {
      throw Error("compose: tile " + std::to_string(t) + " extends outside the mosaic");
    }
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        const std::size_t g = static_cast<std::size_t>(tr.y0 + y) * width + (tr.x0 + x);
        if (node[g] != kUnset) throw Error("compose: tiles overlap at (" + std::to_string(tr.x0 + x) + "," + std::to_string(tr.y0 + y) + ")");
        node[g] = base + m.label(x, y);
        tile_of[g] = static_cast<std::uint32_t>(t);
      }
    }
    features.insert(features.end(), tr.features.begin(), tr.features.end());
    weights.insert(weights.end(), tr.weights.begin(), tr.weights.end());
    base += m.count();
  }
  if (std::find(node.begin(), node.end(), kUnset) != node.end()) throw Error("compose: tiles leave a gap in the mosaic");

  // Regions with a 4-neighbour in another tile.
  std::vector<char> border(base, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> adj;
  std::vector<std::uint64_t> area(base, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      ++area[node[p]];
      auto visit = [&](std::size_t q) {
        if (node[q] == node[p]) return;
        if (tile_of[q] != tile_of[p]) border[node[p]] = border[node[q]] = 1;
        adj.emplace_back(std::min(node[p], node[q]), std::max(node[p], node[q]));
      };
      if (x + 1 < width) visit(p + 1);
      if (y + 1 < height) visit(p + width);
    }
  }
  std::sort(adj.begin(), adj.end());
  adj.erase(std::unique(adj.begin(), adj.end()), adj.end());

  // Border subgraph with compact ids.
  std::vector<std::uint32_t> sub(base, kUnset);
  std::vector<std::uint32_t> global_of;
  for (std::uint32_t i = 0; i < base; ++i) {
    if (border[i]) {
      sub[i] = static_cast<std::uint32_t>(global_of.size());
      global_of.push_back(i);
    }
  }
  std::vector<std::vector<double>> sf;
  std::vector<double> sw;
  std::vector<std::uint64_t> sa;
  for (std::uint32_t g : global_of) {
    sf.push_back(features[g]);
    sw.push_back(weights[g]);
    sa.push_back(area[g]);
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> se;
  for (const auto& [a, b] : adj) {
    if (border[a] && border[b]) se.emplace_back(sub[a], sub[b]);
  }

  ComposeResult out;
  out.border_nodes = global_of.size();
  std::vector<std::uint32_t> merged_root(base);
  for (std::uint32_t i = 0; i < base; ++i) merged_root[i] = i;
  std::vector<std::vector<double>> final_feat = features;
  std::vector<double> final_w = weights;
  if (!global_of.empty()) {
    const RegionGraph g = make_graph(std::move(sf), std::move(sw), std::move(se), std::move(sa));
    const MergeResult mr = run_merge(g, scale);
    // Representative of each merged region: its smallest global node id.
    std::vector<std::uint32_t> rep(mr.region_count, kUnset);
    for (std::uint32_t s = 0; s < global_of.size(); ++s) {
      auto& r = rep[mr.region_of_node[s]];
      r = std::min(r, global_of[s]);
    }
    for (std::uint32_t s = 0; s < global_of.size(); ++s) {
      const std::uint32_t r = rep[mr.region_of_node[s]];
      merged_root[global_of[s]] = r;
      final_feat[r] = mr.region_features[mr.region_of_node[s]];
      final_w[r] = mr.region_weights[mr.region_of_node[s]];
    }
    out.trace = mr.trace;
    for (auto& st : out.trace.steps) {
      st.a = global_of[st.a];
      st.b = global_of[st.b];
    }
  }

  LabelImage img{width, height, std::vector<std::uint32_t>(npx)};
  for (std::size_t p = 0; p < npx; ++p) img.labels[p] = merged_root[node[p]];
  out.map = relabel_connected(img);
  out.features.resize(out.map.count());
  out.weights.resize(out.map.count());
  for (std::size_t p = 0; p < npx; ++p) {
    const std::uint32_t l = out.map.labels()[p];
    if (out.features[l].empty()) {
      out.features[l] = final_feat[img.labels[p]];
      out.weights[l] = final_w[img.labels[p]];
    }
  }
  return out;
}

std::vector<TileResult> split_tiles(const SegmentMap& map, const std::vector<std::vector<double>>& features,
                                    const std::vector<double>& weights, const std::vector<int>& x_edges,
                                    const std::vector<int>& y_edges) {
  if (features.size() != map.count() || weights.size() != map.count()) throw Error("split_tiles: region table size mismatch");
  if (x_edges.size() < 2 || y_edges.size() < 2 || x_edges.front() != 0 || y_edges.front() != 0 ||
      x_edges.back() != map.width() || y_edges.back() != map.height()) {
    throw Error("split_tiles: grid edges must span the map");
  }
  std::vector<TileResult> tiles;
  for (std::size_t r = 0; r + 1 < y_edges.size(); ++r) {
    for (std::size_t c = 0; c + 1 < x_edges.size(); ++c) {
      const int x0 = x_edges[c], y0 = y_edges[r];
      const LabelImage local = crop(map, x0, y0, x_edges[c + 1] - x0, y_edges[r + 1] - y0);
      TileResult t{x0, y0, relabel_connected(local), {}, {}};
      t.features.resize(t.map.count());
      t.weights.resize(t.map.count());
      for (std::size_t p = 0; p < local.labels.size(); ++p) {
        const std::uint32_t l = t.map.labels()[p];
        t.features[l] = features[local.labels[p]];
        t.weights[l] = weights[local.labels[p]];
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

}  // namespace deepmerge
