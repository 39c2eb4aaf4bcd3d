#include "deepmerge/rag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "deepmerge/error.hpp"
#include "deepmerge/kernels.hpp"

namespace deepmerge {

void RegionGraph::validate() const {
  const std::size_t n = features.size();
  if (weights.size() != n || areas.size() != n) throw Error("region graph: node arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] >= 1.0)) throw Error("region graph: node weight must be >= 1");
    if (features[i].size() != features[0].size()) throw Error("region graph: feature dimensions differ");
    for (double v : features[i]) {
      if (!std::isfinite(v)) throw Error("region graph: non-finite feature");
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    if (a >= b || b >= n) throw Error("region graph: bad edge endpoints");
    if (e > 0 && edges[e - 1] >= edges[e]) throw Error("region graph: edges not sorted and unique");
  }
}

RegionGraph make_graph(std::vector<std::vector<double>> features, std::vector<double> weights,
                       std::vector<std::pair<std::uint32_t, std::uint32_t>> edges, std::vector<std::uint64_t> areas) {
  RegionGraph g;
  g.features = std::move(features);
  g.weights = std::move(weights);
  g.areas = areas.empty() ? std::vector<std::uint64_t>(g.features.size(), 1) : std::move(areas);
  for (auto& [a, b] : edges) {
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.validate();
  return g;
}

RegionGraph build_rag(const SegmentMap& map, const EmbeddingTable& embeddings) {
  if (embeddings.vectors.size() != map.count()) throw Error("build_rag: missing embedding for some segment");
  std::vector<double> w(embeddings.weights.begin(), embeddings.weights.end());
  const auto areas = map.areas();
  return make_graph(embeddings.vectors, std::move(w), adjacent_pairs(map), areas);
}

double edge_weight(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("edge_weight: dimension mismatch");
  return std::sqrt(kernels::squared_distance(a, b));
}

MergedFeature merge_features(std::span<const double> left, double m, std::span<const double> right, double n) {
  if (left.size() != right.size()) throw Error("merge_features: dimension mismatch");
  MergedFeature out{std::vector<double>(left.size()), m + n};
  for (std::size_t j = 0; j < left.size(); ++j) out.feature[j] = (m * left[j] + n * right[j]) / (m + n);
  return out;
}

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

struct Neighbor {
  std::uint32_t id;
  double w;
};

// Strict total order on edges: (weight, smaller id, larger id).
bool edge_less(double wa, std::uint32_t a0, std::uint32_t a1, double wb, std::uint32_t b0, std::uint32_t b1) {
  if (wa != wb) return wa < wb;
  return std::minmax(a0, a1) < std::minmax(b0, b1);
}

class MergeState {
 public:
  explicit MergeState(const RegionGraph& g) : g_(g) {
    g.validate();
    const std::size_t n = g.size();
    alive_.assign(n, 1);
    feat_ = g.features;
    weight_ = g.weights;
    area_ = g.areas;
    nbr_.resize(n);
    for (const auto& [a, b] : g.edges) {
      const double w = edge_weight(feat_[a], feat_[b]);
      nbr_[a].push_back({b, w});
      nbr_[b].push_back({a, w});
    }
    for (auto& l : nbr_) std::sort(l.begin(), l.end(), [](const Neighbor& x, const Neighbor& y) { return x.id < y.id; });
    root_.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) root_[i] = i;
  }

  bool alive(std::uint32_t i) const { return alive_[i] != 0; }
  const std::vector<Neighbor>& neighbors(std::uint32_t i) const { return nbr_[i]; }

  double weight_between(std::uint32_t a, std::uint32_t b) const {
    for (const Neighbor& x : nbr_[a]) {
      if (x.id == b) return x.w;
    }
    return -1.0;
  }

  // Merges b into a (a < b); returns the ids whose incident edges changed.
  std::vector<std::uint32_t> merge(std::uint32_t a, std::uint32_t b) {
    auto mf = merge_features(feat_[a], weight_[a], feat_[b], weight_[b]);
    feat_[a] = std::move(mf.feature);
    weight_[a] = mf.weight;
    area_[a] += area_[b];
    alive_[b] = 0;
    root_[b] = a;

    std::vector<std::uint32_t> ids;
    for (const Neighbor& x : nbr_[a]) {
      if (x.id != b) ids.push_back(x.id);
    }
    for (const Neighbor& x : nbr_[b]) {
      if (x.id != a) ids.push_back(x.id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    nbr_[b].clear();
    nbr_[a].clear();
    for (std::uint32_t x : ids) {
      const double w = edge_weight(feat_[a], feat_[x]);
      nbr_[a].push_back({x, w});
      auto& l = nbr_[x];
      std::erase_if(l, [&](const Neighbor& y) { return y.id == a || y.id == b; });
      l.insert(std::lower_bound(l.begin(), l.end(), a, [](const Neighbor& y, std::uint32_t v) { return y.id < v; }),
               Neighbor{a, w});
    }
    return ids;
  }

  MergeResult result(MergeTrace trace) const {
    MergeResult r;
    const std::size_t n = g_.size();
    r.region_of_node.assign(n, kNone);
    std::vector<std::uint32_t> dense(n, kNone);
    for (std::uint32_t i = 0; i < n; ++i) {
      if (alive_[i]) {
        dense[i] = r.region_count++;
        r.region_features.push_back(feat_[i]);
        r.region_weights.push_back(weight_[i]);
        r.region_areas.push_back(area_[i]);
      }
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t x = i;
      while (root_[x] != x) x = root_[x];
      r.region_of_node[i] = dense[x];
    }
    r.trace = std::move(trace);
    return r;
  }

 private:
  const RegionGraph& g_;
  std::vector<char> alive_;
  std::vector<std::vector<double>> feat_;
  std::vector<double> weight_;
  std::vector<std::uint64_t> area_;
  std::vector<std::vector<Neighbor>> nbr_;
  std::vector<std::uint32_t> root_;
};

struct Cycle {
  double w;
  std::uint32_t a, b;  // a < b
  std::uint64_t va, vb;
};

struct CycleAfter {
  bool operator()(const Cycle& x, const Cycle& y) const { return edge_less(y.w, y.a, y.b, x.w, x.a, x.b); }
};

}  // namespace

MergeResult run_merge(const RegionGraph& graph, double scale) {
  if (!(scale >= 0.0)) throw Error("run_merge: scale must be >= 0");
  MergeState st(graph);
  const std::size_t n = graph.size();
  std::vector<std::uint32_t> dir(n, kNone);
  std::vector<double> dir_w(n, 0.0);
  std::vector<std::uint64_t> ver(n, 0);
  std::priority_queue<Cycle, std::vector<Cycle>, CycleAfter> heap;

  auto refresh = [&](std::uint32_t i) {
    dir[i] = kNone;
    for (const Neighbor& x : st.neighbors(i)) {
      if (dir[i] == kNone || edge_less(x.w, i, x.id, dir_w[i], i, dir[i])) {
        dir[i] = x.id;
        dir_w[i] = x.w;
      }
    }
  };
  auto push_if_cycle = [&](std::uint32_t i) {
    const std::uint32_t j = dir[i];
    if (j == kNone || dir[j] != i) return;
    const auto [a, b] = std::minmax(i, j);
    heap.push({dir_w[i], a, b, ver[a], ver[b]});
  };

  for (std::uint32_t i = 0; i < n; ++i) refresh(i);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (dir[i] != kNone && i < dir[i]) push_if_cycle(i);
  }

  MergeTrace trace;
  while (!heap.empty()) {
    const Cycle c = heap.top();
    heap.pop();
    if (!st.alive(c.a) || !st.alive(c.b) || ver[c.a] != c.va || ver[c.b] != c.vb) continue;
    if (c.w > scale) break;
    trace.steps.push_back({static_cast<std::uint32_t>(trace.steps.size()), c.a, c.b, c.w});
    std::vector<std::uint32_t> touched = st.merge(c.a, c.b);
    ++ver[c.b];
    dir[c.b] = kNone;
    touched.push_back(c.a);
    for (std::uint32_t x : touched) {
      ++ver[x];
      refresh(x);
    }
    for (std::uint32_t x : touched) push_if_cycle(x);
  }
  return st.result(std::move(trace));
}

MergeResult apply_merges(const RegionGraph& graph, std::span<const MergeStep> steps) {
  MergeState st(graph);
  MergeTrace trace;
  for (const MergeStep& s : steps) {
    const auto [a, b] = std::minmax(s.a, s.b);
    if (b >= graph.size() || !st.alive(a) || !st.alive(b)) throw Error("apply_merges: step names a merged region");
    const double w = st.weight_between(a, b);
    if (w < 0.0) throw Error("apply_merges: regions are not adjacent");
    trace.steps.push_back({static_cast<std::uint32_t>(trace.steps.size()), a, b, w});
    st.merge(a, b);
  }
  return st.result(std::move(trace));
}

MergeResult replay(const RegionGraph& graph, const MergeTrace& trace, double scale) {
  std::size_t k = 0;
  while (k < trace.steps.size() && trace.steps[k].weight <= scale) ++k;
  return apply_merges(graph, std::span<const MergeStep>(trace.steps.data(), k));
}

SegmentMap apply_regions(const SegmentMap& map, std::span<const std::uint32_t> region_of_segment) {
  if (region_of_segment.size() != map.count()) throw Error("apply_regions: region table size differs from segment count");
  std::vector<std::uint32_t> labels(map.labels().begin(), map.labels().end());
  for (auto& l : labels) l = region_of_segment[l];
  return SegmentMap(map.width(), map.height(), std::move(labels));
}

}  // namespace deepmerge
