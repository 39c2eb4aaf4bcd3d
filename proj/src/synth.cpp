#include "deepmerge/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <numbers>
#include <random>

#include "deepmerge/error.hpp"

namespace deepmerge {

namespace {

struct Look {
  std::string name;
  std::array<int, 3> color;
  int noise;                      // uniform per-band texture amplitude
  std::array<int, 3> stripe{};    // second colour of striped classes
  bool striped = false;
};

const std::vector<Look>& palette() {
  static const std::vector<Look> p = {
      {"meadow", {60, 130, 60}, 4},
      {"striped_meadow", {60, 130, 60}, 4, {25, 85, 35}, true},
      {"soil", {150, 110, 70}, 4},
      {"stubble", {200, 180, 90}, 3},
      {"road", {128, 128, 128}, 2},
      {"red_roof", {180, 60, 50}, 3},
      {"blue_roof", {60, 80, 170}, 3},
      {"water", {30, 60, 110}, 2},
      {"concrete", {225, 220, 205}, 3},
  };
  return p;
}

const Look& look(const std::string& name) {
  for (const Look& l : palette()) {
    if (l.name == name) return l;
  }
  throw Error("synth: unknown class " + name);
}

Ring rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

Ring ellipse(double cx, double cy, double rx, double ry, int n = 64) {
  Ring r;
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    r.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return r;
}

}  // namespace

SynthScene make_mosaic(std::uint64_t seed) {
  constexpr int W = 512, H = 512;
  SynthScene scene;
  auto add = [&](Ring ring, const std::string& cls) {
    scene.refs.polygons.push_back({static_cast<std::int64_t>(scene.refs.polygons.size()), std::move(ring), {}});
    scene.object_class.push_back(cls);
  };
  // Two rows of fields separated by a road; borders avoid the 256 tile lines.
  // Meadow/striped borders sit on the 16 px grid: both share a colour, so a
  // grid cell straddling them would fuse the two.
  add(rect(0, 0, 160, 200), "meadow");
  add(rect(160, 0, 330, 200), "striped_meadow");
  add(rect(330, 0, 512, 200), "soil");
  add(rect(0, 226, 208, 512), "striped_meadow");
  add(rect(208, 226, 380, 512), "meadow");
  add(rect(380, 226, 512, 512), "stubble");
  add(rect(0, 200, 512, 226), "road");
  // Objects on top of the fields (higher id wins).
  add(rect(40, 40, 110, 120), "red_roof");
  add(ellipse(240, 100, 50, 35), "water");
  add(rect(370, 30, 480, 90), "blue_roof");
  add(rect(360, 120, 440, 180), "concrete");
  add(ellipse(100, 330, 60, 40), "water");
  add(rect(230, 240, 300, 300), "blue_roof");
  add(ellipse(290, 420, 50, 50), "concrete");
  add(rect(400, 300, 490, 470), "red_roof");
  add(ellipse(60, 460, 40, 30), "blue_roof");

  const ReferenceRaster owner = rasterize_polygons(scene.refs, W, H);
  scene.raster = Raster(W, H, 3);
  std::mt19937_64 rng(seed);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::int32_t o = owner.owner[static_cast<std::size_t>(y) * W + x];
      if (o == kNoReference) throw Error("synth: scene leaves a pixel uncovered");
      const Look& l = look(scene.object_class[o]);
      const bool alt = l.striped && ((x + y) % 40) >= 20;
      const auto& c = alt ? l.stripe : l.color;
      std::uniform_int_distribution<int> noise(-l.noise, l.noise);
      for (int b = 0; b < 3; ++b) scene.raster.at(x, y, b) = static_cast<std::uint8_t>(std::clamp(c[b] + noise(rng), 0, 255));
    }
  }
  return scene;
}

std::vector<std::int32_t> majority_reference(const SegmentMap& map, const ReferenceRaster& refs) {
  if (refs.width != map.width() || refs.height != map.height()) throw Error("majority_reference: size mismatch");
  const std::size_t nref = refs.mask_areas.size();
  std::vector<std::vector<std::uint64_t>> counts(map.count(), std::vector<std::uint64_t>(nref + 1, 0));
  const auto labels = map.labels();
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::int32_t r = refs.owner[p];
    ++counts[labels[p]][r == kNoReference ? nref : static_cast<std::size_t>(r)];
  }
  std::vector<std::int32_t> out(map.count(), kNoReference);
  for (std::uint32_t s = 0; s < map.count(); ++s) {
    std::uint64_t best = 0;
    for (std::size_t r = 0; r <= nref; ++r) {
      if (counts[s][r] > best) {
        best = counts[s][r];
        out[s] = r == nref ? kNoReference : static_cast<std::int32_t>(r);
      }
    }
  }
  return out;
}

namespace {

// Round-robin over shuffled groups so that every group contributes before
// any contributes twice.
std::vector<SamplePair> draw_stratified(std::vector<std::vector<SamplePair>>& groups, std::size_t n,
                                        std::mt19937_64& rng) {
  for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
  std::shuffle(groups.begin(), groups.end(), rng);
  std::vector<SamplePair> out;
  for (std::size_t round = 0; out.size() < n; ++round) {
    bool any = false;
    for (auto& g : groups) {
      if (round < g.size() && out.size() < n) {
        out.push_back(g[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

}  // namespace

PairSplit derive_pairs(const SegmentMap& map, const std::vector<std::int32_t>& owner, std::size_t n_train,
                       double positive_fraction, std::uint64_t seed) {
  if (owner.size() != map.count()) throw Error("derive_pairs: owner table size mismatch");
  if (!(positive_fraction >= 0 && positive_fraction <= 1)) throw Error("derive_pairs: fraction outside [0, 1]");
  // Positives grouped by reference, negatives by the pair of references.
  std::map<std::pair<std::int32_t, std::int32_t>, std::vector<SamplePair>> pos_groups, neg_groups;
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& [a, b] : adjacent_pairs(map)) {
    const std::int32_t oa = owner[a], ob = owner[b];
    if (oa == kNoReference || ob == kNoReference) continue;
    if (oa == ob) {
      pos_groups[{oa, oa}].push_back({a, b, 1});
      ++n_pos;
    } else {
      neg_groups[std::minmax(oa, ob)].push_back({a, b, 0});
      ++n_neg;
    }
  }
  auto flatten = [](auto& m) {
    std::vector<std::vector<SamplePair>> v;
    for (auto& [k, g] : m) v.push_back(std::move(g));
    return v;
  };
  auto pos = flatten(pos_groups);
  auto neg = flatten(neg_groups);
  std::mt19937_64 rng(seed);
  const std::size_t want_pos = static_cast<std::size_t>(std::llround(n_train * positive_fraction));
  // Keep at least half of each class for evaluation.
  const std::size_t np = std::min(want_pos, n_pos / 2);
  const std::size_t nn = std::min(n_train - std::min(n_train, want_pos), n_neg / 2);
  PairSplit s;
  s.train = draw_stratified(pos, np, rng);
  auto tn = draw_stratified(neg, nn, rng);
  s.train.insert(s.train.end(), tn.begin(), tn.end());
  std::set<std::pair<std::uint32_t, std::uint32_t>> chosen;
  for (const SamplePair& p : s.train) chosen.insert({p.left, p.right});
  for (const auto* groups : {&pos, &neg}) {
    for (const auto& g : *groups) {
      for (const SamplePair& p : g) {
        if (!chosen.count({p.left, p.right})) s.held_out.push_back(p);
      }
    }
  }
  std::sort(s.held_out.begin(), s.held_out.end(),
            [](const SamplePair& x, const SamplePair& y) { return std::pair(x.left, x.right) < std::pair(y.left, y.right); });
  std::shuffle(s.train.begin(), s.train.end(), rng);
  return s;
}

}  // namespace deepmerge
