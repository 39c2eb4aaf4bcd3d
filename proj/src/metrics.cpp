#include "deepmerge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "deepmerge/error.hpp"

namespace deepmerge {

std::string MetricsReport::to_json() const {
  const nlohmann::json j = {{"precision", precision}, {"recall", recall}, {"F", f},
                            {"GOSE", gose},           {"GUSE", guse},     {"TE", te},
                            {"PSE", pse},             {"NSR", nsr},       {"ED2", ed2},
                            {"N", n_references},      {"M", m_segments},  {"V", v_corresponding}};
  return j.dump(2);
}

std::string MetricsReport::csv_header() { return "precision,recall,F,GOSE,GUSE,TE,PSE,NSR,ED2,N,M,V"; }

std::string MetricsReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu", precision, recall, f,
                gose, guse, te, pse, nsr, ed2, static_cast<unsigned long long>(n_references),
                static_cast<unsigned long long>(m_segments), static_cast<unsigned long long>(v_corresponding));
  return buf;
}

MetricsReport evaluate(const SegmentMap& map, const ReferenceSet& refs) {
  if (refs.polygons.empty()) throw Error("evaluate: empty reference set");
  for (const Polygon& p : refs.polygons) {
    auto check = [&](const Ring& r) {
      for (const Point2& v : r) {
        if (v.x < 0.0 || v.y < 0.0 || v.x > map.width() || v.y > map.height()) {
          throw Error("evaluate: reference " + std::to_string(p.id) + " outside image bounds");
        }
      }
    };
    check(p.exterior);
    for (const Ring& h : p.holes) check(h);
  }
  return evaluate_raster(map, rasterize_polygons(refs, map.width(), map.height()));
}

MetricsReport evaluate_raster(const SegmentMap& map, const ReferenceRaster& refs) {
  if (refs.width != map.width() || refs.height != map.height()) throw Error("evaluate: reference raster size differs");
  const std::size_t nref = refs.mask_areas.size();
  if (nref == 0) throw Error("evaluate: empty reference set");
  const std::uint32_t nseg = map.count();
  const auto seg_area = map.areas();

  // Sparse contingency table as sorted (segment, reference) codes.
  std::vector<std::uint64_t> codes;
  std::vector<std::uint64_t> ref_area(nref, 0);
  const auto labels = map.labels();
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::int32_t r = refs.owner[p];
    if (r == kNoReference) continue;
    ++ref_area[r];
    codes.push_back(static_cast<std::uint64_t>(labels[p]) * nref + static_cast<std::uint64_t>(r));
  }
  std::sort(codes.begin(), codes.end());
  struct Cell {
    std::uint32_t seg;
    std::uint32_t ref;
    std::uint64_t n;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < codes.size();) {
    std::size_t j = i;
    while (j < codes.size() && codes[j] == codes[i]) ++j;
    cells.push_back({static_cast<std::uint32_t>(codes[i] / nref), static_cast<std::uint32_t>(codes[i] % nref), j - i});
    i = j;
  }

  // Best reference per segment and best segment per reference.
  std::vector<std::uint64_t> seg_best(nseg, 0);
  std::vector<std::uint64_t> ref_best(nref, 0);
  std::vector<std::uint32_t> ref_best_seg(nref, 0);
  std::vector<std::uint64_t> ref_union(nref, 0);  // total area of segments meeting R_i
  std::vector<char> seg_corresponds(nseg, 0);
  for (const Cell& c : cells) {
    seg_best[c.seg] = std::max(seg_best[c.seg], c.n);
    if (c.n > ref_best[c.ref]) {  // cells visit segments in ascending order, so ties keep the smaller label
      ref_best[c.ref] = c.n;
      ref_best_seg[c.ref] = c.seg;
    }
    ref_union[c.ref] += seg_area[c.seg];
    if (2 * c.n >= seg_area[c.seg] || 2 * c.n >= ref_area[c.ref]) seg_corresponds[c.seg] = 1;
  }

  MetricsReport m;
  std::uint64_t s_total = 0, s_hit = 0;
  for (std::uint32_t s = 0; s < nseg; ++s) {
    if (seg_best[s] == 0) continue;
    ++m.m_segments;
    s_total += seg_area[s];
    s_hit += seg_best[s];
    m.v_corresponding += seg_corresponds[s];
  }
  std::uint64_t r_total = 0, r_hit = 0;
  double gose = 0.0;
  std::uint64_t guse = 0, pse = 0;
  for (std::size_t i = 0; i < nref; ++i) {
    const std::uint64_t a = ref_area[i];
    if (a == 0) continue;
    ++m.n_references;
    r_total += a;
    r_hit += ref_best[i];
    if (a > 1) gose += static_cast<double>(a) * static_cast<double>(a - ref_best[i]) / static_cast<double>(a - 1);
    guse += std::min(ref_union[i] - a, a);
    pse += seg_area[ref_best_seg[i]] - ref_best[i];
  }
  if (r_total == 0) throw Error("evaluate: references cover no pixels");
  const double R = static_cast<double>(r_total);
  m.precision = static_cast<double>(s_hit) / static_cast<double>(s_total);
  m.recall = static_cast<double>(r_hit) / R;
  m.f = (m.precision > 0.0 && m.recall > 0.0) ? 1.0 / (0.5 / m.precision + 0.5 / m.recall) : 0.0;
  m.gose = gose / R;
  m.guse = static_cast<double>(guse) / R;
  m.te = m.gose + m.guse;
  m.pse = static_cast<double>(pse) / R;
  const double N = static_cast<double>(m.n_references);
  m.nsr = std::abs(N - static_cast<double>(m.v_corresponding)) / N;
  m.ed2 = std::sqrt(m.pse * m.pse + m.nsr * m.nsr);
  return m;
}

}  // namespace deepmerge
