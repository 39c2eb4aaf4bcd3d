#include "deepmerge/oversegment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <set>

#include "deepmerge/error.hpp"

namespace deepmerge {

void OversegConfig::validate() const {
  if (grid_step < 2) throw Error("oversegment: grid_step must be >= 2");
  if (color_tolerance < 0) throw Error("oversegment: color_tolerance must be >= 0");
  if (min_segment < 1) throw Error("oversegment: min_segment must be >= 1");
}

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
};

}  // namespace

SegmentMap oversegment(const Raster& raster, const OversegConfig& cfg) {
  cfg.validate();
  if (raster.width <= 0 || raster.height <= 0 || raster.data.empty()) throw Error("oversegment: empty raster");
  const int w = raster.width;
  const int h = raster.height;
  const int K = raster.bands;
  const std::size_t n = raster.pixel_count();
  std::vector<std::uint32_t> comp(n, kNone);
  std::uint32_t count = 0;
  std::vector<std::uint32_t> stack;

  for (int cy = 0; cy < h; cy += cfg.grid_step) {
    for (int cx = 0; cx < w; cx += cfg.grid_step) {
      const int ex = std::min(w, cx + cfg.grid_step);
      const int ey = std::min(h, cy + cfg.grid_step);
      for (int y = cy; y < ey; ++y) {
        for (int x = cx; x < ex; ++x) {
          const std::size_t s = static_cast<std::size_t>(y) * w + x;
          if (comp[s] != kNone) continue;
          const std::uint8_t* seed = &raster.data[s * K];
          auto similar = [&](std::size_t q) {
            const std::uint8_t* v = &raster.data[q * K];
            for (int b = 0; b < K; ++b) {
              if (std::abs(static_cast<int>(v[b]) - static_cast<int>(seed[b])) > cfg.color_tolerance) return false;
            }
            return true;
          };
          comp[s] = count;
          stack.push_back(static_cast<std::uint32_t>(s));
          while (!stack.empty()) {
            const std::uint32_t p = stack.back();
            stack.pop_back();
            const int px = static_cast<int>(p % w);
            const int py = static_cast<int>(p / w);
            auto visit = [&](int qx, int qy) {
              if (qx < cx || qx >= ex || qy < cy || qy >= ey) return;
              const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
              if (comp[q] == kNone && similar(q)) {
                comp[q] = count;
                stack.push_back(static_cast<std::uint32_t>(q));
              }
            };
            visit(px - 1, py);
            visit(px + 1, py);
            visit(px, py - 1);
            visit(px, py + 1);
          }
          ++count;
        }
      }
    }
  }

  // Absorb undersized components.
  std::vector<std::uint64_t> area(count, 0);
  std::vector<double> sum(static_cast<std::size_t>(count) * K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ++area[comp[i]];
    for (int b = 0; b < K; ++b) sum[static_cast<std::size_t>(comp[i]) * K + b] += raster.data[i * K + b];
  }
  std::vector<std::set<std::uint32_t>> adj(count);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint32_t a = comp[static_cast<std::size_t>(y) * w + x];
      if (x + 1 < w) {
        const std::uint32_t b = comp[static_cast<std::size_t>(y) * w + x + 1];
        if (a != b) adj[a].insert(b), adj[b].insert(a);
      }
      if (y + 1 < h) {
        const std::uint32_t b = comp[static_cast<std::size_t>(y + 1) * w + x];
        if (a != b) adj[a].insert(b), adj[b].insert(a);
      }
    }
  }
  UnionFind uf(count);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::uint32_t id = 0; id < count; ++id) {
      if (uf.find(id) != id || area[id] >= static_cast<std::uint64_t>(cfg.min_segment)) continue;
      std::uint32_t best = kNone;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::uint32_t nb : adj[id]) {
        const std::uint32_t r = uf.find(nb);
        if (r == id) continue;
        double d = 0.0;
        for (int b = 0; b < K; ++b) {
          const double diff = sum[static_cast<std::size_t>(id) * K + b] / static_cast<double>(area[id]) -
                              sum[static_cast<std::size_t>(r) * K + b] / static_cast<double>(area[r]);
          d += diff * diff;
        }
        if (d < best_d || (d == best_d && r < best)) {
          best_d = d;
          best = r;
        }
      }
      if (best == kNone) continue;
      uf.parent[id] = best;
      area[best] += area[id];
      for (int b = 0; b < K; ++b) sum[static_cast<std::size_t>(best) * K + b] += sum[static_cast<std::size_t>(id) * K + b];
      for (std::uint32_t nb : adj[id]) {
        if (nb != best) {
          adj[best].insert(nb);
          adj[nb].insert(best);
        }
      }
      adj[best].erase(id);
      changed = true;
    }
  }

  LabelImage merged{w, h, std::vector<std::uint32_t>(n)};
  for (std::size_t i = 0; i < n; ++i) merged.labels[i] = uf.find(comp[i]);
  return relabel_connected(merged);
}

SegmentMap ingest_external(const LabelImage& labels, const Raster* companion) {
  if (companion != nullptr && (companion->width != labels.width || companion->height != labels.height)) {
    throw Error("ingest_external: dimension mismatch with companion raster");
  }
  return relabel_connected(labels);
}

}  // namespace deepmerge
