#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "deepmerge/sampler.hpp"

using namespace deepmerge;

namespace {

std::vector<Pixel> rect_pixels(int x0, int y0, int w, int h) {
  std::vector<Pixel> p;
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) p.push_back({x, y});
  }
  return p;
}

// Brute-force distance from a pixel to the nearest pixel outside the set.
double depth(const std::set<Pixel>& in, Pixel p) {
  double best = 1e300;
  int minx = 1 << 30, maxx = -(1 << 30), miny = 1 << 30, maxy = -(1 << 30);
  for (const Pixel& q : in) {
    minx = std::min(minx, q.x);
    maxx = std::max(maxx, q.x);
    miny = std::min(miny, q.y);
    maxy = std::max(maxy, q.y);
  }
  for (int y = miny - 1; y <= maxy + 1; ++y) {
    for (int x = minx - 1; x <= maxx + 1; ++x) {
      if (in.count({x, y})) continue;
      best = std::min(best, std::hypot(x - p.x, y - p.y));
    }
  }
  return best;
}

}  // namespace

TEST(PatchWidths, TwelveSquare) {
  const auto seg = rect_pixels(0, 0, 12, 12);
  const PatchWidths w = patch_widths(seg, {6, 6});
  EXPECT_EQ(w.w1, 15);
  EXPECT_EQ(w.w2, 25);
  EXPECT_EQ(w.w3, 35);
  EXPECT_EQ(w.w4, 45);
  EXPECT_NEAR(coverage_ratio(seg, {6, 6}, 15), 144.0 / 225.0, 1e-12);
}

TEST(PatchWidths, SinglePixelDegenerates) {
  const std::vector<Pixel> seg{{3, 3}};
  const PatchWidths w = patch_widths(seg, {3, 3});
  EXPECT_EQ(w.w1, 5);
  EXPECT_EQ(w.w2, 5);
  EXPECT_EQ(w.w3, 5);
  EXPECT_EQ(w.w4, 5);
}

TEST(PatchWidths, IdentitiesOnRandomShapes) {
  for (int w = 1; w < 40; w += 3) {
    for (int h = 1; h < 30; h += 4) {
      const auto seg = rect_pixels(2, 3, w, h);
      const auto c = extraction_centers(seg).centers.front();
      const PatchWidths pw = patch_widths(seg, c);
      EXPECT_LE(pw.w1, pw.w2);
      EXPECT_EQ(pw.w3, pw.w2 + (pw.w2 - pw.w1));
      EXPECT_EQ(pw.w4, pw.w2 + 2 * (pw.w2 - pw.w1));
    }
  }
}

TEST(ExtractionCenters, SmallAndLargeSegments) {
  EXPECT_EQ(extraction_centers(std::vector<Pixel>{{4, 9}}).centers, (std::vector<Pixel>{{4, 9}}));
  const auto rect = rect_pixels(0, 0, 20, 10);
  const auto c = extraction_centers(rect).centers;
  ASSERT_EQ(c.size(), 3u);
  EXPECT_GE(c[0].x, 9);
  EXPECT_LE(c[0].x, 10);
  EXPECT_GE(c[0].y, 4);
  EXPECT_LE(c[0].y, 5);
  // One centre per 10x10 half.
  EXPECT_NE(c[1].x < 10, c[2].x < 10);
}

TEST(ExtractionCenters, LShapeCentresInsideAndDeepest) {
  std::vector<Pixel> l = rect_pixels(0, 0, 30, 8);
  for (const Pixel& p : rect_pixels(0, 8, 8, 22)) l.push_back(p);
  const std::set<Pixel> in(l.begin(), l.end());
  const auto c = extraction_centers(l).centers;
  for (const Pixel& p : c) EXPECT_TRUE(in.count(p));
  double best = 0;
  for (const Pixel& p : l) best = std::max(best, depth(in, p));
  EXPECT_DOUBLE_EQ(depth(in, interior_pole(l)), best);
}

TEST(Patches, EdgeReplicationAndConcentric) {
  Raster r(6, 6, 1);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) r.at(x, y, 0) = static_cast<std::uint8_t>(10 * y + x);
  }
  const Patch p = extract_patch(r, {0, 0}, 5);
  EXPECT_EQ(p.at(0, 0, 0), r.at(0, 0, 0));  // replicated corner
  EXPECT_EQ(p.at(2, 2, 0), r.at(0, 0, 0));
  EXPECT_EQ(p.at(4, 4, 0), r.at(2, 2, 0));
  const PatchSet s = patches_with_widths(r, {3, 3}, {5, 10, 15, 20});
  // P1 is the centre crop of P2.
  const int off = (10 / 2) - (5 / 2);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) EXPECT_EQ(s.levels[0].at(x, y, 0), s.levels[1].at(x + off, y + off, 0));
  }
}
