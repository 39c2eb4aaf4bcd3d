#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deepmerge/features.hpp"
#include "deepmerge/sampler.hpp"

namespace deepmerge {

// Token composition of the encoder input.
//   Tf        : class token + P1 tokens
//   TfMle     : class token + P1..P4 tokens
//   TfMleSfe  : class token + P1..P4 tokens + engineered-feature token
enum class Variant { Tf, TfMle, TfMleSfe };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct NetConfig {
  int in_bands = 3;
  std::array<int, 4> level_sides{4, 8, 16, 32};  // resize side for P1..P4
  int tokens_side = 2;                             // t; kernel = stride = side / t
  int dim = 32;                                    // D
  int layers = 2;                                  // L
  int heads = 4;                                   // h
  int mlp_dim = 128;
  int embed_dim = 16;  // E
  int feature_dim = 10;
  double margin = 1.0;  // lambda
  double dropout = 0.1;
  double lr = 1e-3;
  int batch = 20;
  int epochs = 50;
  std::uint64_t seed = 1;
  Variant variant = Variant::TfMleSfe;

  void validate() const;
  int levels_used() const { return variant == Variant::Tf ? 1 : 4; }
  bool uses_features() const { return variant == Variant::TfMleSfe; }
  int tokens_per_level() const { return tokens_side * tokens_side; }
  int patch_tokens() const { return levels_used() * tokens_per_level(); }
  int sequence_length() const { return 1 + patch_tokens() + (uses_features() ? 1 : 0); }
  int kernel(int level) const { return level_sides[level] / tokens_side; }

  // Transformer-base dimensions: sides 28/56/112/224, t = 7, D = 768, L = 12.
  static NetConfig full_scale();
};

// Offsets of every tensor inside the flat parameter vector.
struct ParamLayout {
  struct Tensor {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  struct Layer {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::array<std::size_t, 4> conv_w{}, conv_b{};
  std::size_t feat_w = 0, feat_b = 0, cls = 0;
  std::vector<Layer> layer;
  std::size_t lnf_g = 0, lnf_b = 0, proj_w = 0, proj_b = 0;
  std::size_t total = 0;
  std::vector<Tensor> tensors;

  explicit ParamLayout(const NetConfig& cfg);
};

struct NetParams {
  NetConfig cfg;
  std::vector<double> theta;

  static NetParams init(const NetConfig& cfg);
};

// Row-major token matrix.
struct Tokens {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tokens() = default;
  Tokens(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
};

// softmax(Q K^T / sqrt(d_k)) V. When `weights` is non-null it receives the
// attention matrix (rows of Q by rows of K).
Tokens attention(const Tokens& q, const Tokens& k, const Tokens& v, Tokens* weights = nullptr);

// Multi-head self-attention of one encoder layer (no LayerNorm, no residual).
Tokens multihead(const Tokens& a, const NetParams& params, int layer);

// Four square patches resized to their level sides, scaled to [-1, 1],
// stored side x side x bands.
struct PreparedPatches {
  std::array<std::vector<double>, 4> levels;
};

PreparedPatches prepare_levels(const PatchSet& set, const NetConfig& cfg);

// Antialiased bilinear resize of a square 8-bit patch.
std::vector<double> resize_patch(const Patch& patch, int side);

struct SegmentInput {
  std::vector<PreparedPatches> centers;
  std::vector<double> features;  // normalised engineered features
};

// Patch tokens (patch_tokens() x D) of the levels selected by the variant.
Tokens multi_level_embed(const PreparedPatches& patches, const NetParams& params);

// Encoder input sequence [class; patch tokens; feature token].
Tokens token_sequence(const PreparedPatches& patches, std::span<const double> features, const NetParams& params);

// Inference-mode embedding of a single extraction centre.
std::vector<double> forward_embed(const PreparedPatches& patches, std::span<const double> features,
                                  const NetParams& params);

// Mean of the per-centre embeddings.
std::vector<double> embed_segment(const SegmentInput& input, const NetParams& params);

double euclidean(std::span<const double> a, std::span<const double> b);

// alpha * d + (1 - alpha) * max(0, margin - d), d the Euclidean distance.
double contrastive_loss(std::span<const double> left, std::span<const double> right, int alpha, double margin);

// Gradient of contrastive_loss with respect to the left embedding; the
// right gradient is its negation. Zero at d = 0.
std::vector<double> contrastive_grad(std::span<const double> left, std::span<const double> right, int alpha,
                                     double margin);

// Training/analysis interface over a fixed set of segments.
struct SamplePair {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  int alpha = 0;  // 1 positive, 0 negative
};

struct TrainingSet {
  std::vector<SegmentInput> segments;
  std::vector<SamplePair> pairs;
};

// Mean contrastive loss over `pairs` and its gradient with respect to
// params.theta (same layout). Dropout is applied when rng is non-null.
double batch_loss_and_grad(const NetParams& params, const TrainingSet& set, std::span<const SamplePair> pairs,
                           std::vector<double>* grad, std::mt19937_64* rng);

struct TrainLog {
  std::vector<double> epoch_loss;
};

// Adam on minibatches of pairs reshuffled every epoch.
NetParams train_siamese(const TrainingSet& set, const NetConfig& cfg, TrainLog* log = nullptr);

// One Adam step on a single batch; used by property tests.
void adam_step(NetParams& params, std::span<const double> grad, std::vector<double>& m, std::vector<double>& v,
               int step);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences (step h) on `samples` random parameter entries with
// dropout off. Relative error |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const NetParams& params, const TrainingSet& set, std::span<const SamplePair> pairs,
                           std::size_t samples, std::uint64_t seed, double h = 1e-5, double floor = 1e-4);

// Model file: NetConfig, SamplerConfig, feature normalisation, parameters.
struct Model {
  NetParams params;
  SamplerConfig sampler;
  FeatureNorm norm;
};

void save_model(const Model& model, const std::string& path);
// NetConfig as a JSON object; parsing overrides only the keys present.
std::string net_config_json(const NetConfig& cfg);
NetConfig net_config_from_json(const std::string& text, NetConfig base = {});
Model load_model(const std::string& path);

// Per-segment embeddings plus centre counts (the merge weights).
struct EmbeddingTable {
  int dim = 0;
  std::vector<std::uint32_t> weights;
  std::vector<std::vector<double>> vectors;
};

void save_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings(const std::string& path);

// Builds network inputs for every segment of a map.
std::vector<SegmentInput> segment_inputs(const Raster& raster, const SegmentMap& map, const NetConfig& cfg,
                                         const SamplerConfig& sampler, const FeatureNorm& norm);
// Raw (unnormalised) engineered features per segment.
std::vector<std::vector<double>> raw_segment_features(const Raster& raster, const SegmentMap& map);

EmbeddingTable embed_all(const std::vector<SegmentInput>& inputs, const NetParams& params);

}  // namespace deepmerge
