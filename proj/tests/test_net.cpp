#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deepmerge/error.hpp"
#include "deepmerge/net.hpp"
#include "deepmerge/oversegment.hpp"
#include "deepmerge/raster_io.hpp"
#include "test_support.hpp"

using namespace deepmerge;

namespace {

NetConfig tiny(Variant v = Variant::TfMleSfe) {
  NetConfig c;
  c.dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.mlp_dim = 16;
  c.embed_dim = 4;
  c.variant = v;
  return c;
}

// Two-colour scene with a few segments and their adjacent pairs.
struct Scene {
  Raster raster;
  SegmentMap map;
  std::vector<SamplePair> pairs;
};

Scene two_tone() {
  Scene s;
  s.raster = Raster(48, 32, 3);
  std::mt19937_64 rng(2);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 48; ++x) {
      const bool left = x < 24;
      for (int b = 0; b < 3; ++b) {
        s.raster.at(x, y, b) = static_cast<std::uint8_t>((left ? 60 : 190) + static_cast<int>(rng() % 5));
      }
    }
  }
  s.map = oversegment(s.raster, {16, 12, 4});
  for (const auto& [a, b] : adjacent_pairs(s.map)) {
    const int xa = static_cast<int>(s.map.pixel_lists()[a][0] % 48), xb = static_cast<int>(s.map.pixel_lists()[b][0] % 48);
    s.pairs.push_back({a, b, (xa < 24) == (xb < 24) ? 1 : 0});
  }
  return s;
}

}  // namespace

TEST(NetConfig, TokenCounts) {
  const NetConfig full = NetConfig::full_scale();
  EXPECT_EQ(full.patch_tokens(), 196);
  EXPECT_EQ(full.sequence_length(), 198);
  NetConfig tf = full;
  tf.variant = Variant::Tf;
  EXPECT_EQ(tf.patch_tokens(), 49);
  EXPECT_EQ(tf.sequence_length(), 50);
  NetConfig bad = tiny();
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(NetConfig, ParseVariant) {
  EXPECT_EQ(parse_variant("TF"), Variant::Tf);
  EXPECT_EQ(parse_variant("TF+MLE"), Variant::TfMle);
  EXPECT_EQ(parse_variant("tf_mle_sfe"), Variant::TfMleSfe);
  EXPECT_THROW(parse_variant("MLE"), Error);
  for (Variant v : {Variant::Tf, Variant::TfMle, Variant::TfMleSfe}) EXPECT_EQ(parse_variant(variant_name(v)), v);
}

TEST(NetConfig, JsonOverrides) {
  const NetConfig c = net_config_from_json(R"({"dim": 16, "variant": "TF"})", tiny());
  EXPECT_EQ(c.dim, 16);
  EXPECT_EQ(c.variant, Variant::Tf);
  EXPECT_EQ(c.layers, 1);
  EXPECT_EQ(net_config_from_json(net_config_json(c)).dim, 16);
}

TEST(Attention, RowsAreConvexCombinations) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N;
  Tokens q(5, 6), k(5, 6), v(5, 6);
  for (auto* t : {&q, &k, &v}) {
    for (auto& x : t->data) x = N(rng);
  }
  Tokens w;
  const Tokens out = attention(q, k, v, &w);
  for (int i = 0; i < 5; ++i) {
    double sum = 0;
    for (int j = 0; j < 5; ++j) {
      EXPECT_GE(w.at(i, j), 0);
      sum += w.at(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // Identical keys give uniform weights and the mean of V.
  Tokens kk(5, 6);
  attention(q, kk, v, &w);
  EXPECT_NEAR(w.at(2, 3), 0.2, 1e-12);
}

static Tokens q1() {
  Tokens t(1, 4);
  t.data = {0.3, -1, 2, 0.5};
  return t;
}

TEST(Attention, MatchesNaiveLoopsAndSingleToken) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N;
  Tokens q(5, 4), k(5, 4), v(5, 3);
  for (auto* t : {&q, &k, &v}) {
    for (auto& x : t->data) x = N(rng);
  }
  const Tokens out = attention(q, k, v);
  for (int i = 0; i < 5; ++i) {
    std::vector<double> logit(5);
    double mx = -1e300, z = 0;
    for (int j = 0; j < 5; ++j) {
      for (int d = 0; d < 4; ++d) logit[j] += q.at(i, d) * k.at(j, d);
      logit[j] /= 2.0;
      mx = std::max(mx, logit[j]);
    }
    for (double& l : logit) z += (l = std::exp(l - mx));
    for (int c = 0; c < 3; ++c) {
      double want = 0;
      for (int j = 0; j < 5; ++j) want += logit[j] / z * v.at(j, c);
      EXPECT_NEAR(out.at(i, c), want, 1e-12);
    }
  }
  Tokens v1(1, 3);
  v1.data = {1.5, -2, 7};
  const Tokens one = attention(q1(), Tokens(1, 4), v1);
  EXPECT_EQ(one.data, (std::vector<double>{1.5, -2, 7}));
}

TEST(Multihead, ShapeAndPermutationEquivariance) {
  NetConfig cfg;  // toy: D = 32, h = 4
  const NetParams p = NetParams::init(cfg);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> N;
  Tokens a(18, 32);
  for (auto& x : a.data) x = N(rng);
  const Tokens out = multihead(a, p, 0);
  EXPECT_EQ(out.rows, 18);
  EXPECT_EQ(out.cols, 32);
  std::vector<int> order(18);
  for (int i = 0; i < 18; ++i) order[i] = 17 - i;
  Tokens b(18, 32);
  for (int i = 0; i < 18; ++i) {
    for (int c = 0; c < 32; ++c) b.at(i, c) = a.at(order[i], c);
  }
  const Tokens outb = multihead(b, p, 0);
  for (int i = 0; i < 18; ++i) {
    for (int c = 0; c < 32; ++c) EXPECT_NEAR(outb.at(i, c), out.at(order[i], c), 1e-12);
  }
}

TEST(Forward, DeterministicAndSensitive) {
  const NetConfig cfg;  // toy
  const NetParams p = NetParams::init(cfg);
  PatchSet set;
  std::mt19937_64 rng(11);
  set.widths = {5, 15, 25, 35};
  for (int l = 0; l < 4; ++l) {
    const int w = 5 + 10 * l;
    set.levels[l] = Patch{w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * w * 3)};
    for (auto& v : set.levels[l].data) v = static_cast<std::uint8_t>(rng() % 256);
  }
  const std::vector<double> feat(10, 0.3);
  const auto e1 = forward_embed(prepare_levels(set, cfg), feat, p);
  const auto e2 = forward_embed(prepare_levels(set, cfg), feat, p);
  ASSERT_EQ(e1.size(), 16u);
  EXPECT_EQ(e1, e2);
  for (double v : e1) EXPECT_TRUE(std::isfinite(v));
  set.levels[0].data[0] ^= 0x80;
  EXPECT_NE(forward_embed(prepare_levels(set, cfg), feat, p), e1);
}

TEST(Shapes, FullScaleSequence) {
  const NetConfig full = NetConfig::full_scale();
  const NetParams p = NetParams::init(full);
  PatchSet set;
  set.widths = {15, 25, 35, 45};
  for (int l = 0; l < 4; ++l) {
    const int w = std::array{15, 25, 35, 45}[l];
    set.levels[l] = Patch{w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * w * 3, 128)};
  }
  const PreparedPatches pp = prepare_levels(set, full);
  EXPECT_EQ(pp.levels[3].size(), 224u * 224u * 3u);
  EXPECT_EQ(multi_level_embed(pp, p).rows, 196);
  const Tokens seq = token_sequence(pp, std::vector<double>(10, 0.0), p);
  EXPECT_EQ(seq.rows, 198);
  EXPECT_EQ(seq.cols, 768);
}

TEST(Resize, ConstantPatchStaysConstant) {
  const Patch p{7, 1, std::vector<std::uint8_t>(49, 200)};
  for (int side : {4, 7, 16}) {
    for (double v : resize_patch(p, side)) EXPECT_NEAR(v, 200.0, 1e-9);
  }
}

TEST(Contrastive, LossAndGradientByHand) {
  const std::vector<double> a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(contrastive_loss(a, b, 1, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(contrastive_loss(a, b, 0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(contrastive_loss(a, b, 0, 6.0), 1.0);
  const auto g = contrastive_grad(a, b, 1, 1.0);
  EXPECT_NEAR(g[0], -0.6, 1e-12);
  EXPECT_NEAR(g[1], -0.8, 1e-12);
  const auto g0 = contrastive_grad(a, a, 1, 1.0);
  EXPECT_EQ(g0[0], 0.0);
}

TEST(Embedding, MeanOverCentres) {
  const NetConfig c = tiny();
  const NetParams p = NetParams::init(c);
  const Scene s = two_tone();
  const auto inputs = segment_inputs(s.raster, s.map, c, SamplerConfig{}, FeatureNorm::identity(10));
  const SegmentInput& in = inputs.front();
  ASSERT_GE(in.centers.size(), 1u);
  std::vector<double> mean(c.embed_dim, 0.0);
  for (const auto& cp : in.centers) {
    const auto e = forward_embed(cp, in.features, p);
    for (int i = 0; i < c.embed_dim; ++i) mean[i] += e[i] / static_cast<double>(in.centers.size());
  }
  const auto got = embed_segment(in, p);
  for (int i = 0; i < c.embed_dim; ++i) EXPECT_NEAR(got[i], mean[i], 1e-12);
}

TEST(GradCheck, AllVariantsAtGenericPoint) {
  const Scene s = two_tone();
  for (Variant v : {Variant::Tf, Variant::TfMle, Variant::TfMleSfe}) {
    const NetConfig c = tiny(v);
    NetParams p = NetParams::init(c);
    const ParamLayout layout(c);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-0.3, 0.3);
    for (int i = 0; i < c.dim; ++i) p.theta[layout.cls + i] = U(rng);
    std::vector<std::vector<double>> raw = raw_segment_features(s.raster, s.map);
    TrainingSet set{segment_inputs(s.raster, s.map, c, SamplerConfig{}, FeatureNorm::fit(raw)), {}};
    const std::vector<SamplePair> pairs(s.pairs.begin(), s.pairs.begin() + 6);
    const GradCheckResult r = grad_check(p, set, pairs, 150, 9);
    EXPECT_LT(r.max_rel_error, 1e-6) << variant_name(v) << " worst index " << r.worst_index;
  }
}

TEST(Training, LossDecreasesAndIsDeterministic) {
  const Scene s = two_tone();
  NetConfig c = tiny();
  c.epochs = 15;
  c.batch = 8;
  const auto raw = raw_segment_features(s.raster, s.map);
  const TrainingSet set{segment_inputs(s.raster, s.map, c, SamplerConfig{}, FeatureNorm::fit(raw)), s.pairs};
  TrainLog log;
  const NetParams a = train_siamese(set, c, &log);
  ASSERT_EQ(log.epoch_loss.size(), 15u);
  EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
  const NetParams b = train_siamese(set, c);
  EXPECT_EQ(a.theta, b.theta);
}

TEST(Training, NeedsBothPairClasses) {
  const Scene s = two_tone();
  const NetConfig c = tiny();
  std::vector<SamplePair> pos;
  for (const auto& p : s.pairs) {
    if (p.alpha == 1) pos.push_back(p);
  }
  const TrainingSet set{segment_inputs(s.raster, s.map, c, SamplerConfig{}, FeatureNorm::identity(10)), pos};
  EXPECT_THROW(train_siamese(set, c), Error);
}

TEST(ModelIo, RoundTripAndCorruption) {
  const auto dir = testutil::temp_dir("modelio");
  Model m;
  m.params = NetParams::init(tiny());
  m.norm = FeatureNorm::identity(10);
  m.sampler.inner_ratio = 0.8;
  save_model(m, (dir / "m.bin").string());
  const Model back = load_model((dir / "m.bin").string());
  EXPECT_EQ(back.params.theta, m.params.theta);
  EXPECT_EQ(back.params.cfg.dim, 8);
  EXPECT_DOUBLE_EQ(back.sampler.inner_ratio, 0.8);
  auto bytes = read_file(dir / "m.bin");
  auto truncated = bytes;
  truncated.resize(bytes.size() - 8);
  write_file(dir / "t.bin", truncated);
  EXPECT_THROW(load_model((dir / "t.bin").string()), Error);
  bytes[0] = 'X';
  write_file(dir / "x.bin", bytes);
  EXPECT_THROW(load_model((dir / "x.bin").string()), Error);
}

TEST(EmbeddingIo, RoundTrip) {
  const auto dir = testutil::temp_dir("embio");
  EmbeddingTable t;
  t.dim = 3;
  t.weights = {1, 3};
  t.vectors = {{0.5, -1, 2}, {1e-300, 7, -0.25}};
  save_embeddings(t, (dir / "e.bin").string());
  const EmbeddingTable b = load_embeddings((dir / "e.bin").string());
  EXPECT_EQ(b.dim, 3);
  EXPECT_EQ(b.weights, t.weights);
  EXPECT_EQ(b.vectors, t.vectors);
}
