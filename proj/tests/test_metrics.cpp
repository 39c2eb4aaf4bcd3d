#include <gtest/gtest.h>

#include <random>

#include "deepmerge/error.hpp"
#include "deepmerge/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace deepmerge;

namespace {

SegmentMap columns(int w, int h, const std::vector<int>& cuts) {
  std::vector<std::uint32_t> l(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint32_t k = 0;
      while (k < cuts.size() && x >= cuts[k]) ++k;
      l[static_cast<std::size_t>(y) * w + x] = k;
    }
  }
  return SegmentMap(w, h, std::move(l));
}

void expect_reports_near(const MetricsReport& a, const MetricsReport& b, double tol) {
  EXPECT_NEAR(a.precision, b.precision, tol);
  EXPECT_NEAR(a.recall, b.recall, tol);
  EXPECT_NEAR(a.f, b.f, tol);
  EXPECT_NEAR(a.gose, b.gose, tol);
  EXPECT_NEAR(a.guse, b.guse, tol);
  EXPECT_NEAR(a.te, b.te, tol);
  EXPECT_NEAR(a.pse, b.pse, tol);
  EXPECT_NEAR(a.nsr, b.nsr, tol);
  EXPECT_NEAR(a.ed2, b.ed2, tol);
  EXPECT_EQ(a.n_references, b.n_references);
  EXPECT_EQ(a.m_segments, b.m_segments);
  EXPECT_EQ(a.v_corresponding, b.v_corresponding);
}

std::vector<oracle::RectRef> random_rects(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> C(0, 64);
  std::vector<oracle::RectRef> r;
  for (int i = 0; i < n; ++i) {
    int x0 = C(rng), x1 = C(rng), y0 = C(rng), y1 = C(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    r.push_back({static_cast<double>(x0), static_cast<double>(y0), std::min(x1 + 0.5, 64.0), std::min(y1 + 0.25, 64.0)});
  }
  return r;
}

}  // namespace

TEST(Metrics, PerfectSegmentation) {
  const SegmentMap map = columns(20, 10, {10});
  const MetricsReport m = evaluate(map, oracle::rect_reference_set({{0, 0, 10, 10}, {10, 0, 20, 10}}));
  EXPECT_DOUBLE_EQ(m.precision, 1);
  EXPECT_DOUBLE_EQ(m.recall, 1);
  EXPECT_DOUBLE_EQ(m.f, 1);
  EXPECT_DOUBLE_EQ(m.te, 0);
  EXPECT_DOUBLE_EQ(m.ed2, 0);
  EXPECT_EQ(m.n_references, 2u);
  EXPECT_EQ(m.v_corresponding, 2u);
}

TEST(Metrics, ReferenceSplitInTwo) {
  const SegmentMap map = columns(20, 10, {5, 10});
  const MetricsReport m = evaluate(map, oracle::rect_reference_set({{0, 0, 10, 10}}));
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_NEAR(m.f, 2.0 / 3, 1e-12);
  EXPECT_NEAR(m.gose, 50.0 / 99, 1e-12);
  EXPECT_DOUBLE_EQ(m.guse, 0);
  EXPECT_DOUBLE_EQ(m.pse, 0);
  EXPECT_EQ(m.v_corresponding, 2u);
  EXPECT_DOUBLE_EQ(m.nsr, 1);
  EXPECT_DOUBLE_EQ(m.ed2, 1);
  EXPECT_EQ(m.m_segments, 2u);
}

TEST(Metrics, ReferenceInsideLargerSegment) {
  const SegmentMap map = columns(20, 10, {});
  const MetricsReport m = evaluate(map, oracle::rect_reference_set({{0, 0, 10, 10}}));
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 1);
  EXPECT_NEAR(m.f, 2.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(m.gose, 0);
  EXPECT_DOUBLE_EQ(m.guse, 1);
  EXPECT_DOUBLE_EQ(m.pse, 1);
  EXPECT_DOUBLE_EQ(m.nsr, 0);
  EXPECT_DOUBLE_EQ(m.ed2, 1);
}

TEST(Metrics, SinglePixelReferenceHasNoOverSegmentation) {
  const SegmentMap map = columns(4, 1, {1, 2});
  const MetricsReport m = evaluate(map, oracle::rect_reference_set({{0, 0, 0.9, 1}}));
  EXPECT_DOUBLE_EQ(m.gose, 0);
  EXPECT_DOUBLE_EQ(m.recall, 1);
}

TEST(Metrics, AgreesWithBruteForce) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 25; ++k) {
    const SegmentMap map = testutil::random_map(rng, 64, 64, 6 + static_cast<int>(rng() % 30));
    const auto rects = random_rects(rng, 1 + static_cast<int>(rng() % 6));
    const auto owner = oracle::rect_owner(rects, 64, 64);
    if (std::all_of(owner.begin(), owner.end(), [](std::int32_t o) { return o == kNoReference; })) continue;
    const ReferenceSet refs = oracle::rect_reference_set(rects);
    EXPECT_EQ(rasterize_polygons(refs, 64, 64).owner, owner);
    expect_reports_near(evaluate(map, refs), oracle::brute_metrics(map, owner, static_cast<int>(rects.size())), 1e-9);
  }
}

TEST(Metrics, RangesAndIdentities) {
  std::mt19937_64 rng(22);
  for (int k = 0; k < 40; ++k) {
    const SegmentMap map = testutil::random_map(rng, 40, 40, 10);
    std::vector<oracle::RectRef> rects{{0, 0, 40, 40}};
    for (const auto& r : random_rects(rng, 3)) rects.push_back({r.x0 * 0.6, r.y0 * 0.6, r.x1 * 0.6, r.y1 * 0.6});
    const MetricsReport m = evaluate(map, oracle::rect_reference_set(rects));
    for (double v : {m.precision, m.recall, m.f, m.gose, m.guse}) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
    EXPECT_LE(m.te, 2);
    EXPECT_GE(m.pse, 0);
    EXPECT_NEAR(m.te, m.gose + m.guse, 1e-12);
    EXPECT_NEAR(m.ed2, std::sqrt(m.pse * m.pse + m.nsr * m.nsr), 1e-12);
    EXPECT_NEAR(m.f, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-12);
  }
}

TEST(Metrics, RefinementRaisesPrecisionAndLowersRecall) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 20; ++k) {
    const SegmentMap coarse = testutil::random_map(rng, 48, 48, 8);
    const SegmentMap other = testutil::random_map(rng, 48, 48, 12);
    // Intersection of two partitions refines both.
    LabelImage img{48, 48, {}};
    for (std::size_t p = 0; p < coarse.labels().size(); ++p) {
      img.labels.push_back(coarse.labels()[p] * 10000 + other.labels()[p]);
    }
    const SegmentMap fine = relabel_connected(img);
    std::vector<oracle::RectRef> rects;
    for (const auto& r : random_rects(rng, 4)) rects.push_back({r.x0 * 0.75, r.y0 * 0.75, r.x1 * 0.75, r.y1 * 0.75});
    const ReferenceSet refs = oracle::rect_reference_set(rects);
    bool covered = false;
    for (auto o : rasterize_polygons(refs, 48, 48).owner) covered |= o != kNoReference;
    if (!covered) continue;
    const MetricsReport a = evaluate(coarse, refs), b = evaluate(fine, refs);
    EXPECT_GE(b.precision, a.precision - 1e-12);
    EXPECT_LE(b.recall, a.recall + 1e-12);
  }
}

TEST(Metrics, Errors) {
  const SegmentMap map = columns(8, 8, {4});
  EXPECT_THROW(evaluate(map, ReferenceSet{}), Error);
  EXPECT_THROW(evaluate(map, oracle::rect_reference_set({{0, 0, 9, 4}})), Error);
  EXPECT_THROW(evaluate(map, oracle::rect_reference_set({{-1, 0, 4, 4}})), Error);
}

TEST(Metrics, JsonAndCsv) {
  const MetricsReport m = evaluate(columns(20, 10, {5, 10}), oracle::rect_reference_set({{0, 0, 10, 10}}));
  EXPECT_NE(m.to_json().find("\"GOSE\""), std::string::npos);
  const auto cols = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(cols(MetricsReport::csv_header()), cols(m.csv_row()));
}
