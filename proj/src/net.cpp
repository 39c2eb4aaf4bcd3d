#include "deepmerge/net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deepmerge/error.hpp"
#include "deepmerge/kernels.hpp"
#include "net_internal.hpp"

namespace deepmerge {

namespace {

constexpr double kLnEps = 1e-5;

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Tf:
      return "TF";
    case Variant::TfMle:
      return "TF+MLE";
    case Variant::TfMleSfe:
      return "TF+MLE+SFE";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  std::string u;
  for (char c : s) u += (c == '_' || c == '-') ? '+' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "TF") return Variant::Tf;
  if (u == "TF+MLE") return Variant::TfMle;
  if (u == "TF+MLE+SFE") return Variant::TfMleSfe;
  throw Error("unknown ablation variant: " + s);
}

void NetConfig::validate() const {
  if (in_bands < 1) throw Error("net config: in_bands must be >= 1");
  if (tokens_side < 1) throw Error("net config: tokens_side must be >= 1");
  for (int s : level_sides) {
    if (s < tokens_side || s % tokens_side != 0) throw Error("net config: level side not divisible by tokens_side");
  }
  if (dim < 1 || heads < 1 || dim % heads != 0) throw Error("net config: dim must be divisible by heads");
  if (layers < 0 || mlp_dim < 1) throw Error("net config: bad layer sizes");
  if (embed_dim < 2) throw Error("net config: embed_dim must be >= 2");
  if (feature_dim < 1) throw Error("net config: feature_dim must be >= 1");
  if (!(margin > 0.0)) throw Error("net config: margin must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("net config: dropout must be in [0, 1)");
  if (!(lr > 0.0) || batch < 1 || epochs < 0) throw Error("net config: bad optimiser settings");
}

NetConfig NetConfig::full_scale() {
  NetConfig c;
  c.level_sides = {28, 56, 112, 224};
  c.tokens_side = 7;
  c.dim = 768;
  c.layers = 12;
  c.heads = 12;
  c.mlp_dim = 3072;
  c.embed_dim = 128;
  return c;
}

ParamLayout::ParamLayout(const NetConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.dim;
  auto take = [&](const std::string& name, std::size_t n) {
    const std::size_t at = total;
    tensors.push_back({name, at, n});
    total += n;
    return at;
  };
  for (int i = 0; i < 4; ++i) {
    const std::size_t k = cfg.kernel(i);
    const std::string lvl = "level" + std::to_string(i + 1);
    conv_w[i] = take(lvl + ".w", k * k * cfg.in_bands * D);
    conv_b[i] = take(lvl + ".b", D);
  }
  feat_w = take("feature.w", cfg.feature_dim * D);
  feat_b = take("feature.b", D);
  cls = take("cls", D);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = take(p + "ln1.g", D);
    L.ln1_b = take(p + "ln1.b", D);
    L.wq = take(p + "wq", D * D);
    L.wk = take(p + "wk", D * D);
    L.wv = take(p + "wv", D * D);
    L.wo = take(p + "wo", D * D);
    L.ln2_g = take(p + "ln2.g", D);
    L.ln2_b = take(p + "ln2.b", D);
    L.w1 = take(p + "mlp.w1", D * cfg.mlp_dim);
    L.b1 = take(p + "mlp.b1", cfg.mlp_dim);
    L.w2 = take(p + "mlp.w2", cfg.mlp_dim * D);
    L.b2 = take(p + "mlp.b2", D);
    layer.push_back(L);
  }
  lnf_g = take("lnf.g", D);
  lnf_b = take("lnf.b", D);
  proj_w = take("proj.w", D * cfg.embed_dim);
  proj_b = take("proj.b", cfg.embed_dim);
}

NetParams NetParams::init(const NetConfig& cfg) {
  const ParamLayout layout(cfg);
  NetParams p{cfg, std::vector<double>(layout.total, 0.0)};
  std::mt19937_64 rng(cfg.seed);
  auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t i = 0; i < n; ++i) p.theta[off + i] = u(rng);
  };
  const std::size_t D = cfg.dim;
  for (int i = 0; i < 4; ++i) {
    const std::size_t fan = static_cast<std::size_t>(cfg.kernel(i)) * cfg.kernel(i) * cfg.in_bands;
    fill(layout.conv_w[i], fan * D, fan);
  }
  fill(layout.feat_w, cfg.feature_dim * D, cfg.feature_dim);
  for (const auto& L : layout.layer) {
    std::fill_n(p.theta.begin() + L.ln1_g, D, 1.0);
    std::fill_n(p.theta.begin() + L.ln2_g, D, 1.0);
    fill(L.wq, D * D, D);
    fill(L.wk, D * D, D);
    fill(L.wv, D * D, D);
    fill(L.wo, D * D, D);
    fill(L.w1, D * cfg.mlp_dim, D);
    fill(L.w2, cfg.mlp_dim * D, cfg.mlp_dim);
  }
  std::fill_n(p.theta.begin() + layout.lnf_g, D, 1.0);
  fill(layout.proj_w, D * cfg.embed_dim, D);
  return p;
}

// ---------------------------------------------------------------------------
// Resizing and input preparation

namespace {

struct Taps {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<int> index;
  std::vector<double> weight;
};

Taps triangle_taps(int in, int out) {
  Taps t;
  const double scale = static_cast<double>(in) / out;
  const double fs = std::max(scale, 1.0);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * scale;
    const int lo = static_cast<int>(std::floor(center - fs));
    const int hi = static_cast<int>(std::ceil(center + fs));
    const int start = static_cast<int>(t.index.size());
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double wgt = std::max(0.0, 1.0 - std::abs((i + 0.5 - center) / fs));
      if (wgt <= 0.0) continue;
      t.index.push_back(std::clamp(i, 0, in - 1));
      t.weight.push_back(wgt);
      total += wgt;
    }
    for (std::size_t j = start; j < t.weight.size(); ++j) t.weight[j] /= total;
    t.first.push_back(start);
    t.count.push_back(static_cast<int>(t.index.size()) - start);
  }
  return t;
}

}  // namespace

std::vector<double> resize_patch(const Patch& patch, int side) {
  if (patch.width < 1 || side < 1) throw Error("resize_patch: empty size");
  const int in = patch.width;
  const int B = patch.bands;
  const Taps taps = triangle_taps(in, side);
  // Horizontal pass: in rows x side cols.
  std::vector<double> tmp(static_cast<std::size_t>(in) * side * B, 0.0);
  for (int y = 0; y < in; ++y) {
    for (int o = 0; o < side; ++o) {
      for (int j = 0; j < taps.count[o]; ++j) {
        const int x = taps.index[taps.first[o] + j];
        const double w = taps.weight[taps.first[o] + j];
        for (int b = 0; b < B; ++b) tmp[(static_cast<std::size_t>(y) * side + o) * B + b] += w * patch.at(x, y, b);
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(side) * side * B, 0.0);
  for (int o = 0; o < side; ++o) {
    for (int j = 0; j < taps.count[o]; ++j) {
      const int y = taps.index[taps.first[o] + j];
      const double w = taps.weight[taps.first[o] + j];
      for (int x = 0; x < side; ++x) {
        for (int b = 0; b < B; ++b) {
          out[(static_cast<std::size_t>(o) * side + x) * B + b] += w * tmp[(static_cast<std::size_t>(y) * side + x) * B + b];
        }
      }
    }
  }
  return out;
}

PreparedPatches prepare_levels(const PatchSet& set, const NetConfig& cfg) {
  PreparedPatches p;
  for (int i = 0; i < 4; ++i) {
    if (set.levels[i].bands != cfg.in_bands) throw Error("prepare_levels: band count differs from model");
    if (i >= cfg.levels_used()) continue;
    p.levels[i] = resize_patch(set.levels[i], cfg.level_sides[i]);
    for (double& v : p.levels[i]) v = (v / 255.0 - 0.5) * 2.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Dense building blocks

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

// Y = X W (+ b); W is in x out row-major.
Tokens linear(const Tokens& x, const double* w, const double* b, int out) {
  Tokens y(x.rows, out);
  const auto& kt = K();
  for (int i = 0; i < x.rows; ++i) {
    double* yr = y.row(i).data();
    if (b != nullptr) std::copy(b, b + out, yr);
    const double* xr = x.row(i).data();
    for (int p = 0; p < x.cols; ++p) {
      if (xr[p] != 0.0) kt.axpy(xr[p], w + static_cast<std::size_t>(p) * out, yr, out);
    }
  }
  return y;
}

void linear_back(const Tokens& x, const Tokens& dy, const double* w, double* dw, double* db, Tokens* dx) {
  const auto& kt = K();
  const int out = dy.cols;
  if (dx != nullptr) *dx = Tokens(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* dyr = dy.row(i).data();
    const double* xr = x.row(i).data();
    if (db != nullptr) kt.axpy(1.0, dyr, db, out);
    for (int p = 0; p < x.cols; ++p) {
      if (xr[p] != 0.0) kt.axpy(xr[p], dyr, dw + static_cast<std::size_t>(p) * out, out);
      if (dx != nullptr) dx->at(i, p) = kt.dot(dyr, w + static_cast<std::size_t>(p) * out, out);
    }
  }
}

void layer_norm(const Tokens& x, const double* g, const double* b, Tokens& y, Tokens* hat, std::vector<double>* rstd) {
  y = Tokens(x.rows, x.cols);
  if (hat != nullptr) *hat = Tokens(x.rows, x.cols);
  if (rstd != nullptr) rstd->assign(x.rows, 0.0);
  const int D = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= D;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= D;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < D; ++j) {
      const double h = (r[j] - mean) * rs;
      y.at(i, j) = g[j] * h + b[j];
      if (hat != nullptr) hat->at(i, j) = h;
    }
    if (rstd != nullptr) (*rstd)[i] = rs;
  }
}

// dx = rstd (dhat - mean(dhat) - hat mean(dhat hat)), dhat = dy g.
void layer_norm_back(const Tokens& hat, const std::vector<double>& rstd, const Tokens& dy, const double* g, double* dg,
                     double* db, Tokens& dx) {
  const int D = hat.cols;
  dx = Tokens(hat.rows, D);
  std::vector<double> dhat(D);
  for (int i = 0; i < hat.rows; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < D; ++j) {
      const double d = dy.at(i, j);
      dg[j] += d * hat.at(i, j);
      db[j] += d;
      dhat[j] = d * g[j];
      m1 += dhat[j];
      m2 += dhat[j] * hat.at(i, j);
    }
    m1 /= D;
    m2 /= D;
    for (int j = 0; j < D; ++j) dx.at(i, j) = rstd[i] * (dhat[j] - m1 - hat.at(i, j) * m2);
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

std::vector<double> dropout_mask(std::size_t n, double p, std::mt19937_64* rng) {
  if (rng == nullptr || p <= 0.0) return {};
  std::vector<double> m(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (double& v : m) v = u(*rng) < p ? 0.0 : keep;
  return m;
}

void apply_mask(Tokens& t, const std::vector<double>& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] *= mask[i];
}

// Head slice [h*dk, (h+1)*dk) of a token matrix.
Tokens head_slice(const Tokens& t, int h, int dk) {
  Tokens s(t.rows, dk);
  for (int i = 0; i < t.rows; ++i) std::copy_n(&t.data[static_cast<std::size_t>(i) * t.cols + h * dk], dk, s.row(i).data());
  return s;
}

void check_finite(const Tokens& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite activation in ") + what);
  }
}

Tokens im2col(const std::vector<double>& level, int side, int t, int bands) {
  const int k = side / t;
  Tokens cols(t * t, k * k * bands);
  for (int gy = 0; gy < t; ++gy) {
    for (int gx = 0; gx < t; ++gx) {
      double* dst = cols.row(gy * t + gx).data();
      for (int yy = 0; yy < k; ++yy) {
        const std::size_t src = (static_cast<std::size_t>(gy * k + yy) * side + gx * k) * bands;
        std::copy_n(&level[src], static_cast<std::size_t>(k) * bands, dst + static_cast<std::size_t>(yy) * k * bands);
      }
    }
  }
  return cols;
}

}  // namespace

Tokens attention(const Tokens& q, const Tokens& k, const Tokens& v, Tokens* weights) {
  if (q.cols != k.cols || k.rows != v.rows) throw Error("attention: shape mismatch");
  check_finite(q, "attention Q");
  check_finite(k, "attention K");
  check_finite(v, "attention V");
  const auto& kt = K();
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Tokens w(q.rows, k.rows);
  Tokens out(q.rows, v.cols);
  for (int i = 0; i < q.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k.rows; ++j) {
      w.at(i, j) = kt.dot(q.row(i).data(), k.row(j).data(), q.cols) * scale;
      mx = std::max(mx, w.at(i, j));
    }
    double sum = 0.0;
    for (int j = 0; j < k.rows; ++j) {
      w.at(i, j) = std::exp(w.at(i, j) - mx);
      sum += w.at(i, j);
    }
    for (int j = 0; j < k.rows; ++j) {
      w.at(i, j) /= sum;
      kt.axpy(w.at(i, j), v.row(j).data(), out.row(i).data(), v.cols);
    }
  }
  if (weights != nullptr) *weights = std::move(w);
  return out;
}

namespace {

Tokens multihead_impl(const Tokens& y, const NetParams& params, const ParamLayout::Layer& L, detail::LayerCache* c) {
  const NetConfig& cfg = params.cfg;
  const int D = cfg.dim;
  const int dk = D / cfg.heads;
  const double* th = params.theta.data();
  Tokens q = linear(y, th + L.wq, nullptr, D);
  Tokens k = linear(y, th + L.wk, nullptr, D);
  Tokens v = linear(y, th + L.wv, nullptr, D);
  Tokens concat(y.rows, D);
  if (c != nullptr) c->attn.resize(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    Tokens w;
    const Tokens o = attention(head_slice(q, h, dk), head_slice(k, h, dk), head_slice(v, h, dk), c ? &w : nullptr);
    for (int i = 0; i < y.rows; ++i) std::copy_n(o.row(i).data(), dk, &concat.at(i, h * dk));
    if (c != nullptr) c->attn[h] = std::move(w);
  }
  Tokens a = linear(concat, th + L.wo, nullptr, D);
  if (c != nullptr) {
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->concat = std::move(concat);
  }
  return a;
}

}  // namespace

Tokens multihead(const Tokens& a, const NetParams& params, int layer) {
  const ParamLayout layout(params.cfg);
  if (layer < 0 || layer >= params.cfg.layers) throw Error("multihead: layer out of range");
  if (a.cols != params.cfg.dim) throw Error("multihead: token width differs from model dim");
  return multihead_impl(a, params, layout.layer[layer], nullptr);
}

Tokens multi_level_embed(const PreparedPatches& patches, const NetParams& params) {
  const NetConfig& cfg = params.cfg;
  const ParamLayout layout(cfg);
  Tokens out(cfg.patch_tokens(), cfg.dim);
  int row = 0;
  for (int i = 0; i < cfg.levels_used(); ++i) {
    const std::size_t expect = static_cast<std::size_t>(cfg.level_sides[i]) * cfg.level_sides[i] * cfg.in_bands;
    if (patches.levels[i].size() != expect) throw Error("multi_level_embed: level size differs from config");
    const Tokens cols = im2col(patches.levels[i], cfg.level_sides[i], cfg.tokens_side, cfg.in_bands);
    const Tokens tok = linear(cols, params.theta.data() + layout.conv_w[i], params.theta.data() + layout.conv_b[i], cfg.dim);
    for (int r = 0; r < tok.rows; ++r) std::copy_n(tok.row(r).data(), cfg.dim, out.row(row++).data());
  }
  return out;
}

Tokens token_sequence(const PreparedPatches& patches, std::span<const double> features, const NetParams& params) {
  const NetConfig& cfg = params.cfg;
  const ParamLayout layout(cfg);
  const Tokens pt = multi_level_embed(patches, params);
  Tokens seq(cfg.sequence_length(), cfg.dim);
  std::copy_n(params.theta.data() + layout.cls, cfg.dim, seq.row(0).data());
  for (int r = 0; r < pt.rows; ++r) std::copy_n(pt.row(r).data(), cfg.dim, seq.row(r + 1).data());
  if (cfg.uses_features()) {
    if (static_cast<int>(features.size()) != cfg.feature_dim) throw Error("token_sequence: feature dimension mismatch");
    Tokens f(1, cfg.feature_dim);
    std::copy(features.begin(), features.end(), f.data.begin());
    const Tokens ft = linear(f, params.theta.data() + layout.feat_w, params.theta.data() + layout.feat_b, cfg.dim);
    std::copy_n(ft.data.data(), cfg.dim, seq.row(seq.rows - 1).data());
  }
  return seq;
}

namespace detail {

std::vector<double> forward(const PreparedPatches& patches, std::span<const double> features, const NetParams& params,
                            const ParamLayout& layout, ForwardCache* cache, std::mt19937_64* rng) {
  const NetConfig& cfg = params.cfg;
  const int D = cfg.dim;
  const double* th = params.theta.data();
  const int n = cfg.sequence_length();

  Tokens x(n, D);
  std::copy_n(th + layout.cls, D, x.row(0).data());
  int row = 1;
  for (int i = 0; i < cfg.levels_used(); ++i) {
    const std::size_t expect = static_cast<std::size_t>(cfg.level_sides[i]) * cfg.level_sides[i] * cfg.in_bands;
    if (patches.levels[i].size() != expect) throw Error("forward: level size differs from config");
    Tokens cols = im2col(patches.levels[i], cfg.level_sides[i], cfg.tokens_side, cfg.in_bands);
    const Tokens tok = linear(cols, th + layout.conv_w[i], th + layout.conv_b[i], D);
    for (int r = 0; r < tok.rows; ++r) std::copy_n(tok.row(r).data(), D, x.row(row++).data());
    if (cache != nullptr) cache->cols[i] = std::move(cols);
  }
  if (cfg.uses_features()) {
    if (static_cast<int>(features.size()) != cfg.feature_dim) throw Error("forward: feature dimension mismatch");
    double* fr = x.row(row).data();
    std::copy_n(th + layout.feat_b, D, fr);
    for (int j = 0; j < cfg.feature_dim; ++j) {
      if (features[j] != 0.0) K().axpy(features[j], th + layout.feat_w + static_cast<std::size_t>(j) * D, fr, D);
    }
  }
  std::vector<double> drop0 = dropout_mask(x.data.size(), cfg.dropout, rng);
  apply_mask(x, drop0);
  if (cache != nullptr) {
    cache->drop0 = std::move(drop0);
    cache->layers.assign(cfg.layers, {});
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& L = layout.layer[l];
    detail::LayerCache* c = cache ? &cache->layers[l] : nullptr;
    Tokens y;
    layer_norm(x, th + L.ln1_g, th + L.ln1_b, y, c ? &c->ln1_hat : nullptr, c ? &c->ln1_rstd : nullptr);
    Tokens a = multihead_impl(y, params, L, c);
    std::vector<double> d1 = dropout_mask(a.data.size(), cfg.dropout, rng);
    apply_mask(a, d1);
    Tokens mid = x;
    for (std::size_t i = 0; i < mid.data.size(); ++i) mid.data[i] += a.data[i];

    Tokens y2;
    layer_norm(mid, th + L.ln2_g, th + L.ln2_b, y2, c ? &c->ln2_hat : nullptr, c ? &c->ln2_rstd : nullptr);
    Tokens hp = linear(y2, th + L.w1, th + L.b1, cfg.mlp_dim);
    Tokens ha(hp.rows, hp.cols);
    for (std::size_t i = 0; i < hp.data.size(); ++i) ha.data[i] = gelu(hp.data[i]);
    Tokens m = linear(ha, th + L.w2, th + L.b2, D);
    std::vector<double> d2 = dropout_mask(m.data.size(), cfg.dropout, rng);
    apply_mask(m, d2);
    Tokens out = mid;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += m.data[i];
    check_finite(out, "encoder layer");

    if (c != nullptr) {
      c->x_in = std::move(x);
      c->drop1 = std::move(d1);
      c->x_mid = std::move(mid);
      c->h_pre = std::move(hp);
      c->h_act = std::move(ha);
      c->drop2 = std::move(d2);
    }
    x = std::move(out);
  }

  // Final LayerNorm and projection of the class token.
  Tokens cls(1, D);
  std::copy_n(x.row(0).data(), D, cls.row(0).data());
  Tokens cln;
  Tokens hat;
  std::vector<double> rstd;
  layer_norm(cls, th + layout.lnf_g, th + layout.lnf_b, cln, &hat, &rstd);
  const Tokens e = linear(cln, th + layout.proj_w, th + layout.proj_b, cfg.embed_dim);
  check_finite(e, "projection");
  if (cache != nullptr) {
    cache->lnf_hat = hat.data;
    cache->lnf_rstd = rstd[0];
  }
  return e.data;
}

void backward(const ForwardCache& cache, std::span<const double> d_embed, std::span<const double> features,
              const NetParams& params, const ParamLayout& layout, std::vector<double>& grad) {
  const NetConfig& cfg = params.cfg;
  const int D = cfg.dim;
  const int n = cfg.sequence_length();
  const double* th = params.theta.data();
  double* g = grad.data();

  // Projection.
  Tokens hat(1, D);
  hat.data = cache.lnf_hat;
  Tokens cln(1, D);
  for (int j = 0; j < D; ++j) cln.data[j] = th[layout.lnf_g + j] * hat.data[j] + th[layout.lnf_b + j];
  Tokens de(1, cfg.embed_dim);
  std::copy(d_embed.begin(), d_embed.end(), de.data.begin());
  Tokens dcln;
  linear_back(cln, de, th + layout.proj_w, g + layout.proj_w, g + layout.proj_b, &dcln);
  Tokens dcls;
  layer_norm_back(hat, {cache.lnf_rstd}, dcln, th + layout.lnf_g, g + layout.lnf_g, g + layout.lnf_b, dcls);

  Tokens dx(n, D);
  std::copy_n(dcls.data.data(), D, dx.row(0).data());

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& L = layout.layer[l];
    const detail::LayerCache& c = cache.layers[l];
    // MLP branch.
    Tokens dm = dx;
    apply_mask(dm, c.drop2);
    Tokens dha;
    linear_back(c.h_act, dm, th + L.w2, g + L.w2, g + L.b2, &dha);
    for (std::size_t i = 0; i < dha.data.size(); ++i) dha.data[i] *= gelu_grad(c.h_pre.data[i]);
    Tokens y2(c.ln2_hat.rows, D);
    for (int i = 0; i < y2.rows; ++i) {
      for (int j = 0; j < D; ++j) y2.at(i, j) = th[L.ln2_g + j] * c.ln2_hat.at(i, j) + th[L.ln2_b + j];
    }
    Tokens dy2;
    linear_back(y2, dha, th + L.w1, g + L.w1, g + L.b1, &dy2);
    Tokens dmid_ln;
    layer_norm_back(c.ln2_hat, c.ln2_rstd, dy2, th + L.ln2_g, g + L.ln2_g, g + L.ln2_b, dmid_ln);
    Tokens dmid = dx;
    for (std::size_t i = 0; i < dmid.data.size(); ++i) dmid.data[i] += dmid_ln.data[i];

    // Attention branch.
    Tokens da = dmid;
    apply_mask(da, c.drop1);
    Tokens dconcat;
    linear_back(c.concat, da, th + L.wo, g + L.wo, nullptr, &dconcat);
    const int dk = D / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Tokens dq(n, D), dk_(n, D), dv(n, D);
    const auto& kt = K();
    for (int h = 0; h < cfg.heads; ++h) {
      const Tokens& P = c.attn[h];
      const Tokens qh = head_slice(c.q, h, dk);
      const Tokens kh = head_slice(c.k, h, dk);
      const Tokens vh = head_slice(c.v, h, dk);
      const Tokens doh = head_slice(dconcat, h, dk);
      Tokens dS(n, n);
      for (int i = 0; i < n; ++i) {
        double rowdot = 0.0;
        for (int j = 0; j < n; ++j) {
          const double dp = kt.dot(doh.row(i).data(), vh.row(j).data(), dk);
          dS.at(i, j) = dp;
          rowdot += dp * P.at(i, j);
        }
        for (int j = 0; j < n; ++j) dS.at(i, j) = P.at(i, j) * (dS.at(i, j) - rowdot) * scale;
      }
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          kt.axpy(P.at(i, j), doh.row(i).data(), &dv.at(j, h * dk), dk);
          kt.axpy(dS.at(i, j), kh.row(j).data(), &dq.at(i, h * dk), dk);
          kt.axpy(dS.at(i, j), qh.row(i).data(), &dk_.at(j, h * dk), dk);
        }
      }
    }
    Tokens y1(n, D);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < D; ++j) y1.at(i, j) = th[L.ln1_g + j] * c.ln1_hat.at(i, j) + th[L.ln1_b + j];
    }
    Tokens dy1, tmp;
    linear_back(y1, dq, th + L.wq, g + L.wq, nullptr, &dy1);
    linear_back(y1, dk_, th + L.wk, g + L.wk, nullptr, &tmp);
    for (std::size_t i = 0; i < dy1.data.size(); ++i) dy1.data[i] += tmp.data[i];
    linear_back(y1, dv, th + L.wv, g + L.wv, nullptr, &tmp);
    for (std::size_t i = 0; i < dy1.data.size(); ++i) dy1.data[i] += tmp.data[i];
    Tokens dxin_ln;
    layer_norm_back(c.ln1_hat, c.ln1_rstd, dy1, th + L.ln1_g, g + L.ln1_g, g + L.ln1_b, dxin_ln);
    for (std::size_t i = 0; i < dmid.data.size(); ++i) dmid.data[i] += dxin_ln.data[i];
    dx = std::move(dmid);
  }

  apply_mask(dx, cache.drop0);
  const auto& kt = K();
  kt.axpy(1.0, dx.row(0).data(), g + layout.cls, D);
  int row = 1;
  for (int i = 0; i < cfg.levels_used(); ++i) {
    const int tpl = cfg.tokens_per_level();
    Tokens dtok(tpl, D);
    for (int r = 0; r < tpl; ++r) std::copy_n(dx.row(row + r).data(), D, dtok.row(r).data());
    linear_back(cache.cols[i], dtok, th + layout.conv_w[i], g + layout.conv_w[i], g + layout.conv_b[i], nullptr);
    row += tpl;
  }
  if (cfg.uses_features()) {
    const double* dr = dx.row(row).data();
    kt.axpy(1.0, dr, g + layout.feat_b, D);
    for (int j = 0; j < cfg.feature_dim; ++j) {
      if (features[j] != 0.0) kt.axpy(features[j], dr, g + layout.feat_w + static_cast<std::size_t>(j) * D, D);
    }
  }
}

}  // namespace detail

std::vector<double> forward_embed(const PreparedPatches& patches, std::span<const double> features,
                                  const NetParams& params) {
  const ParamLayout layout(params.cfg);
  return detail::forward(patches, features, params, layout, nullptr, nullptr);
}

std::vector<double> embed_segment(const SegmentInput& input, const NetParams& params) {
  if (input.centers.empty()) throw Error("embed_segment: segment has no extraction centres");
  const ParamLayout layout(params.cfg);
  std::vector<double> mean(params.cfg.embed_dim, 0.0);
  for (const auto& c : input.centers) {
    const auto e = detail::forward(c, input.features, params, layout, nullptr, nullptr);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += e[j];
  }
  for (double& v : mean) v /= static_cast<double>(input.centers.size());
  return mean;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("euclidean: dimension mismatch");
  return std::sqrt(kernels::squared_distance(a, b));
}

double contrastive_loss(std::span<const double> left, std::span<const double> right, int alpha, double margin) {
  const double d = euclidean(left, right);
  return alpha * d + (1 - alpha) * std::max(0.0, margin - d);
}

std::vector<double> contrastive_grad(std::span<const double> left, std::span<const double> right, int alpha,
                                     double margin) {
  const double d = euclidean(left, right);
  std::vector<double> g(left.size(), 0.0);
  if (d == 0.0) return g;
  double coef = 0.0;
  if (alpha == 1) {
    coef = 1.0;
  } else if (d < margin) {
    coef = -1.0;
  }
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = coef * (left[j] - right[j]) / d;
  return g;
}

}  // namespace deepmerge
