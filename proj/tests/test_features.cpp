#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deepmerge/error.hpp"
#include "deepmerge/features.hpp"
#include "deepmerge/polygon.hpp"
#include "test_support.hpp"

using namespace deepmerge;

namespace {

std::vector<Pixel> rect_pixels(int x0, int y0, int w, int h) {
  std::vector<Pixel> p;
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) p.push_back({x, y});
  }
  return p;
}

}  // namespace

TEST(SegmentStats, ConstantSquare) {
  Raster r(12, 12, 1);
  std::fill(r.data.begin(), r.data.end(), 50);
  const SegmentStats s = compute_stats(r, rect_pixels(1, 1, 10, 10));
  EXPECT_EQ(s.n, 100u);
  EXPECT_DOUBLE_EQ(s.mean[0], 50);
  EXPECT_DOUBLE_EQ(s.std[0], 0);
  EXPECT_DOUBLE_EQ(s.perimeter, 40);
  EXPECT_NEAR(s.mbr_length, 10, 1e-9);
  EXPECT_NEAR(s.mbr_width, 10, 1e-9);
  EXPECT_NEAR(s.shape, 40 / (4 * std::sqrt(40.0)), 1e-9);
  EXPECT_NEAR(s.compactness, 400, 1e-9);
  EXPECT_DOUBLE_EQ(s.brightness, 50);
  EXPECT_NEAR(s.border, 1.0, 1e-9);
}

TEST(SegmentStats, SinglePixel) {
  Raster r(3, 3, 1);
  r.at(1, 1, 0) = 7;
  const SegmentStats s = compute_stats(r, std::vector<Pixel>{{1, 1}});
  EXPECT_DOUBLE_EQ(s.mean[0], 7);
  EXPECT_DOUBLE_EQ(s.std[0], 0);
  EXPECT_DOUBLE_EQ(s.perimeter, 4);
  EXPECT_NEAR(s.shape, 0.5, 1e-12);
  EXPECT_NEAR(s.compactness, 4, 1e-12);
  EXPECT_NEAR(s.border, 1, 1e-12);
  EXPECT_THROW(compute_stats(r, std::vector<Pixel>{}), Error);
}

TEST(SegmentStats, TwoBandBrightnessAndSampleStd) {
  Raster r(2, 1, 2);
  r.at(0, 0, 0) = 0;
  r.at(1, 0, 0) = 0;
  r.at(0, 0, 1) = 255;
  r.at(1, 0, 1) = 255;
  const SegmentStats s = compute_stats(r, rect_pixels(0, 0, 2, 1));
  EXPECT_DOUBLE_EQ(s.brightness, 127.5);
  Raster g(2, 1, 1);
  g.at(0, 0, 0) = 10;
  g.at(1, 0, 0) = 20;
  EXPECT_NEAR(compute_stats(g, rect_pixels(0, 0, 2, 1)).std[0], std::sqrt(50.0), 1e-12);  // n-1 denominator
  EXPECT_EQ(s.raw_features().size(), feature_dim(2));
}

TEST(SegmentStats, TranslationAndIntensityShift) {
  std::mt19937_64 rng(3);
  Raster r(40, 40, 3);
  for (auto& v : r.data) v = static_cast<std::uint8_t>(rng() % 200);
  std::vector<Pixel> a = {{2, 2}, {3, 2}, {4, 2}, {3, 3}, {3, 4}, {4, 4}};
  std::vector<Pixel> b;
  Raster r2 = r;
  for (const Pixel& p : a) {
    b.push_back({p.x + 20, p.y + 17});
    for (int k = 0; k < 3; ++k) r2.at(p.x + 20, p.y + 17, k) = r.at(p.x, p.y, k);
  }
  const auto fa = compute_stats(r, a).raw_features();
  const auto fb = compute_stats(r2, b).raw_features();
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_NEAR(fa[i], fb[i], 1e-9) << i;

  Raster r3 = r;
  for (auto& v : r3.data) v = static_cast<std::uint8_t>(v + 30);
  const auto s1 = compute_stats(r, a), s3 = compute_stats(r3, a);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(s3.mean[k], s1.mean[k] + 30, 1e-9);
    EXPECT_NEAR(s3.std[k], s1.std[k], 1e-9);
  }
  EXPECT_NEAR(s3.brightness, s1.brightness + 30, 1e-9);
  EXPECT_NEAR(s3.shape, s1.shape, 1e-12);
}

TEST(SegmentStats, PerimeterMatchesTracedBoundary) {
  std::mt19937_64 rng(9);
  const SegmentMap m = testutil::random_map(rng, 25, 19, 9);
  Raster r(m.width(), m.height(), 1);
  const auto stats = compute_all_stats(r, m);
  const ReferenceSet polys = trace_boundaries(m);
  for (std::uint32_t s = 0; s < m.count(); ++s) {
    double edges = 0;
    auto ring_len = [](const Ring& ring) {
      double l = 0;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point2& p = ring[i];
        const Point2& q = ring[(i + 1) % ring.size()];
        l += std::abs(p.x - q.x) + std::abs(p.y - q.y);
      }
      return l;
    };
    edges += ring_len(polys.polygons[s].exterior);
    for (const Ring& h : polys.polygons[s].holes) edges += ring_len(h);
    EXPECT_DOUBLE_EQ(stats[s].perimeter, edges) << "segment " << s;
  }
}

TEST(FeatureNorm, ZScoreMoments) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(5, 3);
  std::vector<std::vector<double>> rows(200, std::vector<double>(4));
  for (auto& r : rows) {
    for (auto& v : r) v = N(rng);
    r[3] = 2.0;  // constant column
  }
  const FeatureNorm norm = FeatureNorm::fit(rows);
  for (std::size_t j = 0; j < 4; ++j) {
    double m = 0, v = 0;
    std::vector<double> z;
    for (const auto& r : rows) z.push_back(apply_norm(r, norm)[j]);
    for (double x : z) m += x;
    m /= static_cast<double>(z.size());
    for (double x : z) v += (x - m) * (x - m);
    v /= static_cast<double>(z.size());
    EXPECT_LT(std::abs(m), 1e-9);
    if (j < 3) {
      EXPECT_LT(std::abs(std::sqrt(v) - 1), 1e-9);
    } else {
      EXPECT_EQ(norm.scale[j], 1.0);
    }
  }
  const auto id = FeatureNorm::identity(4);
  EXPECT_EQ(apply_norm(rows[0], id), rows[0]);
}
