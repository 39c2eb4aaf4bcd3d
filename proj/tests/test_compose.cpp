#include <gtest/gtest.h>

#include <random>
#include <set>

#include "deepmerge/compose.hpp"
#include "deepmerge/error.hpp"
#include "test_support.hpp"

using namespace deepmerge;

namespace {

TileResult uniform_tile(int x0, int y0, int w, int h, std::vector<double> f) {
  return {x0, y0, SegmentMap(w, h, std::vector<std::uint32_t>(static_cast<std::size_t>(w) * h, 0)), {std::move(f)}, {1}};
}

}  // namespace

TEST(Compose, IdenticalHalvesJoin) {
  const ComposeResult r = compose({uniform_tile(0, 0, 4, 4, {1, 2}), uniform_tile(4, 0, 4, 4, {1, 2})}, 8, 4, 0.6);
  EXPECT_EQ(r.map.count(), 1u);
  EXPECT_EQ(r.border_nodes, 2u);
  ASSERT_EQ(r.trace.steps.size(), 1u);
  EXPECT_DOUBLE_EQ(r.weights[0], 2);
}

TEST(Compose, DistantRegionsStayApart) {
  const ComposeResult r = compose({uniform_tile(0, 0, 4, 4, {0}), uniform_tile(4, 0, 4, 4, {0.7})}, 8, 4, 0.6);
  EXPECT_EQ(r.map.count(), 2u);
  EXPECT_TRUE(r.trace.steps.empty());
}

TEST(Compose, QuadrantRegionBecomesOne) {
  std::vector<TileResult> tiles;
  for (int ty = 0; ty < 2; ++ty) {
    for (int tx = 0; tx < 2; ++tx) tiles.push_back(uniform_tile(tx * 5, ty * 5, 5, 5, {0.25}));
  }
  EXPECT_EQ(compose(tiles, 10, 10, 0.1).map.count(), 1u);
}

TEST(Compose, InteriorRegionsUntouchedAndIdempotent) {
  std::mt19937_64 rng(31);
  const int W = 48, H = 40;
  const SegmentMap global = testutil::random_map(rng, W, H, 40);
  std::vector<std::vector<double>> f(global.count());
  for (auto& v : f) v = {static_cast<double>(rng() % 4) * 0.3};
  const std::vector<double> w(global.count(), 1.0);
  const std::vector<int> xe{0, 20, W}, ye{0, 17, H};
  const auto tiles = split_tiles(global, f, w, xe, ye);
  ASSERT_EQ(tiles.size(), 4u);
  const ComposeResult r = compose(tiles, W, H, 0.2);
  EXPECT_EQ(r.map.width(), W);
  EXPECT_EQ(r.features.size(), r.map.count());

  // Every tile region with no neighbour in another tile keeps its pixel set.
  for (const TileResult& t : tiles) {
    const auto lists = t.map.pixel_lists();
    for (std::uint32_t reg = 0; reg < t.map.count(); ++reg) {
      bool touches = false;
      std::set<std::uint32_t> global_labels;
      for (std::uint32_t p : lists[reg]) {
        const int x = static_cast<int>(p % t.map.width()), y = static_cast<int>(p / t.map.width());
        touches |= (x == 0 && t.x0 > 0) || (y == 0 && t.y0 > 0) || (x == t.map.width() - 1 && t.x0 + x + 1 < W) ||
                   (y == t.map.height() - 1 && t.y0 + y + 1 < H);
        global_labels.insert(r.map.label(t.x0 + x, t.y0 + y));
      }
      ASSERT_EQ(global_labels.size(), 1u);
      if (touches) continue;
      EXPECT_EQ(r.map.areas()[*global_labels.begin()], lists[reg].size());
    }
  }

  // Composing the composed result on the same grid merges nothing new.
  const ComposeResult again = compose(split_tiles(r.map, r.features, r.weights, xe, ye), W, H, 0.2);
  EXPECT_TRUE(same_partition(again.map, r.map));
}

TEST(Compose, RejectsGapsAndOverlaps) {
  EXPECT_THROW(compose({uniform_tile(0, 0, 4, 4, {0})}, 8, 4, 0.5), Error);
  EXPECT_THROW(compose({uniform_tile(0, 0, 5, 4, {0}), uniform_tile(4, 0, 4, 4, {0})}, 8, 4, 0.5), Error);
  EXPECT_THROW(compose({uniform_tile(0, 0, 4, 4, {0}), uniform_tile(6, 0, 4, 4, {0})}, 8, 4, 0.5), Error);
  EXPECT_THROW(compose({}, 8, 4, 0.5), Error);
}
