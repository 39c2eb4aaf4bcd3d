#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "deepmerge/error.hpp"
#include "deepmerge/net.hpp"
#include "net_internal.hpp"

namespace deepmerge {

double batch_loss_and_grad(const NetParams& params, const TrainingSet& set, std::span<const SamplePair> pairs,
                           std::vector<double>* grad, std::mt19937_64* rng) {
  if (pairs.empty()) throw Error("batch_loss_and_grad: empty batch");
  const ParamLayout layout(params.cfg);
  const int E = params.cfg.embed_dim;

  // Embed every distinct segment once; its embedding is the centre mean.
  std::map<std::uint32_t, std::size_t> slot;
  for (const SamplePair& p : pairs) {
    for (std::uint32_t s : {p.left, p.right}) {
      if (s >= set.segments.size()) throw Error("batch_loss_and_grad: pair references unknown segment");
      slot.emplace(s, 0);
    }
  }
  std::vector<std::uint32_t> ids;
  for (auto& [s, i] : slot) {
    i = ids.size();
    ids.push_back(s);
  }
  std::vector<std::vector<detail::ForwardCache>> caches(ids.size());
  std::vector<std::vector<double>> emb(ids.size(), std::vector<double>(E, 0.0));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const SegmentInput& in = set.segments[ids[i]];
    if (in.centers.empty()) throw Error("batch_loss_and_grad: segment without extraction centres");
    caches[i].resize(in.centers.size());
    for (std::size_t c = 0; c < in.centers.size(); ++c) {
      const auto e = detail::forward(in.centers[c], in.features, params, layout, grad ? &caches[i][c] : nullptr, rng);
      for (int j = 0; j < E; ++j) emb[i][j] += e[j];
    }
    for (double& v : emb[i]) v /= static_cast<double>(in.centers.size());
  }

  const double inv = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  std::vector<std::vector<double>> demb(ids.size(), std::vector<double>(E, 0.0));
  for (const SamplePair& p : pairs) {
    const std::size_t a = slot[p.left];
    const std::size_t b = slot[p.right];
    loss += contrastive_loss(emb[a], emb[b], p.alpha, params.cfg.margin) * inv;
    if (grad == nullptr) continue;
    const auto g = contrastive_grad(emb[a], emb[b], p.alpha, params.cfg.margin);
    for (int j = 0; j < E; ++j) {
      demb[a][j] += g[j] * inv;
      demb[b][j] -= g[j] * inv;
    }
  }
  if (grad == nullptr) return loss;

  grad->assign(params.theta.size(), 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const SegmentInput& in = set.segments[ids[i]];
    std::vector<double> d = demb[i];
    for (double& v : d) v /= static_cast<double>(in.centers.size());
    for (std::size_t c = 0; c < in.centers.size(); ++c) {
      detail::backward(caches[i][c], d, in.features, params, layout, *grad);
    }
  }
  return loss;
}

void adam_step(NetParams& params, std::span<const double> grad, std::vector<double>& m, std::vector<double>& v,
               int step) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const std::size_t n = params.theta.size();
  if (grad.size() != n) throw Error("adam_step: gradient size mismatch");
  m.resize(n, 0.0);
  v.resize(n, 0.0);
  const double c1 = 1.0 - std::pow(b1, step);
  const double c2 = 1.0 - std::pow(b2, step);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    params.theta[i] -= params.cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

NetParams train_siamese(const TrainingSet& set, const NetConfig& cfg, TrainLog* log) {
  cfg.validate();
  const bool has_pos = std::any_of(set.pairs.begin(), set.pairs.end(), [](const SamplePair& p) { return p.alpha == 1; });
  const bool has_neg = std::any_of(set.pairs.begin(), set.pairs.end(), [](const SamplePair& p) { return p.alpha == 0; });
  if (!has_pos || !has_neg) throw Error("train_siamese: need at least one positive and one negative pair");

  NetParams params = NetParams::init(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(set.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> m, v, grad;
  std::vector<SamplePair> batch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i) batch.push_back(set.pairs[order[i]]);
      const double loss = batch_loss_and_grad(params, set, batch, &grad, &rng);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train_siamese: non-finite loss at epoch " << epoch << " batch " << batches;
        throw Error(msg.str());
      }
      adam_step(params, grad, m, v, ++step);
      total += loss;
      ++batches;
    }
    if (log != nullptr) log->epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return params;
}

GradCheckResult grad_check(const NetParams& params, const TrainingSet& set, std::span<const SamplePair> pairs,
                           std::size_t samples, std::uint64_t seed, double h, double floor) {
  std::vector<double> grad;
  batch_loss_and_grad(params, set, pairs, &grad, nullptr);
  const ParamLayout layout(params.cfg);

  // Spread the probes over every tensor, then fill up uniformly.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picks;
  const std::size_t per = std::max<std::size_t>(1, samples / layout.tensors.size());
  for (const auto& t : layout.tensors) {
    std::uniform_int_distribution<std::size_t> u(0, t.size - 1);
    for (std::size_t i = 0; i < std::min(per, t.size); ++i) picks.push_back(t.offset + u(rng));
  }
  std::uniform_int_distribution<std::size_t> any(0, params.theta.size() - 1);
  while (picks.size() < samples) picks.push_back(any(rng));
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  while (picks.size() < std::min(samples, params.theta.size())) {
    const std::size_t p = any(rng);
    if (!std::binary_search(picks.begin(), picks.end(), p)) picks.insert(std::upper_bound(picks.begin(), picks.end(), p), p);
  }

  GradCheckResult r;
  NetParams probe = params;
  for (std::size_t idx : picks) {
    const double orig = probe.theta[idx];
    probe.theta[idx] = orig + h;
    const double lp = batch_loss_and_grad(probe, set, pairs, nullptr, nullptr);
    probe.theta[idx] = orig - h;
    const double lm = batch_loss_and_grad(probe, set, pairs, nullptr, nullptr);
    probe.theta[idx] = orig;
    const double num = (lp - lm) / (2.0 * h);
    const double a = grad[idx];
    const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
    if (rel > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = std::max(r.max_rel_error, rel);
      r.worst_index = idx;
      r.worst_analytic = a;
      r.worst_numeric = num;
    }
    ++r.checked;
  }
  return r;
}

std::vector<std::vector<double>> raw_segment_features(const Raster& raster, const SegmentMap& map) {
  const auto stats = compute_all_stats(raster, map);
  std::vector<std::vector<double>> out;
  out.reserve(stats.size());
  for (const auto& s : stats) out.push_back(s.raw_features());
  return out;
}

std::vector<SegmentInput> segment_inputs(const Raster& raster, const SegmentMap& map, const NetConfig& cfg,
                                         const SamplerConfig& sampler, const FeatureNorm& norm) {
  if (raster.width != map.width() || raster.height != map.height()) {
    throw Error("segment_inputs: raster and segment map dimensions differ");
  }
  const auto raw = raw_segment_features(raster, map);
  const auto lists = map.pixel_lists();
  std::vector<SegmentInput> out(lists.size());
  for (std::size_t s = 0; s < lists.size(); ++s) {
    const auto pixels = to_pixels(lists[s], map.width());
    for (const PatchSet& set : segment_patch_sets(raster, pixels, sampler)) out[s].centers.push_back(prepare_levels(set, cfg));
    out[s].features = apply_norm(raw[s], norm);
  }
  return out;
}

EmbeddingTable embed_all(const std::vector<SegmentInput>& inputs, const NetParams& params) {
  EmbeddingTable t;
  t.dim = params.cfg.embed_dim;
  for (const auto& in : inputs) {
    t.vectors.push_back(embed_segment(in, params));
    t.weights.push_back(static_cast<std::uint32_t>(in.centers.size()));
  }
  return t;
}

}  // namespace deepmerge
