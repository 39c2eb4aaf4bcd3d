#pragma once

#include <random>
#include <vector>

#include "deepmerge/net.hpp"

namespace deepmerge::detail {

struct LayerCache {
  Tokens x_in;
  Tokens ln1_hat;
  std::vector<double> ln1_rstd;
  Tokens q, k, v;
  std::vector<Tokens> attn;  // per head
  Tokens concat;
  std::vector<double> drop1;
  Tokens x_mid;
  Tokens ln2_hat;
  std::vector<double> ln2_rstd;
  Tokens h_pre;
  Tokens h_act;
  std::vector<double> drop2;
};

struct ForwardCache {
  std::array<Tokens, 4> cols;  // im2col input of each level
  std::vector<double> drop0;
  std::vector<LayerCache> layers;
  std::vector<double> lnf_hat;
  double lnf_rstd = 0.0;
};

// Embedding of one extraction centre. Records intermediates when cache is
// non-null; applies dropout when rng is non-null.
std::vector<double> forward(const PreparedPatches& patches, std::span<const double> features, const NetParams& params,
                            const ParamLayout& layout, ForwardCache* cache, std::mt19937_64* rng);

// Accumulates d(loss)/d(theta) into grad given d(loss)/d(embedding).
void backward(const ForwardCache& cache, std::span<const double> d_embed, std::span<const double> features,
              const NetParams& params, const ParamLayout& layout, std::vector<double>& grad);

}  // namespace deepmerge::detail
