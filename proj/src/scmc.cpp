#include "favs/scmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "favs/ops.hpp"

namespace favs::scmc {

namespace {

void require_rank4(const RealTensor& x, const char* who) {
  if (x.shape.size() != 4) {
    throw std::invalid_argument(std::string(who) + ": expected rank-4 [T,C,H,W], got " +
                                shape_str(x.shape));
  }
}

/// Indices of the k largest entries, ascending. Equal values keep the lower
/// index.
std::vector<std::size_t> topk_indices(std::span<const double> w, int k) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

void check_simplex(std::span<const double> w, const char* who) {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) {
      throw std::invalid_argument(std::string(who) + ": weights must be nonnegative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(who) + ": weights sum to " + std::to_string(sum) +
                                ", expected 1");
  }
}

}  // namespace

RealTensor stc_enhance(const RealTensor& x, const StcParams& p) {
  require_rank4(x, "stc_enhance");
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (C == 0 || H * W == 0) throw std::invalid_argument("stc_enhance: empty input");

  // Spatial gate from the channel-mean map.
  RealTensor mean_map({T, 1, H, W});
  const std::size_t hw = H * W;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = &x.data[(t * C + c) * hw];
      double* dst = &mean_map.data[t * hw];
      for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
    double* dst = &mean_map.data[t * hw];
    for (std::size_t i = 0; i < hw; ++i) dst[i] /= static_cast<double>(C);
  }
  RealTensor spatial = ops::sigmoid_gate(ops::depthwise_conv2d(mean_map, p.spatial_gate));
  RealTensor y(x.shape);
  for (std::size_t t = 0; t < T; ++t) {
    const double* g = &spatial.data[t * hw];
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = &x.data[(t * C + c) * hw];
      double* dst = &y.data[(t * C + c) * hw];
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * g[i];
    }
  }

  // Temporal gate per (frame, channel).
  RealTensor pooled = ops::global_avg_pool(y);
  RealTensor tgate =
      ops::sigmoid_gate(ops::two_layer_mlp(pooled, p.temporal_w1, p.temporal_w2));
  if (tgate.shape[1] != C) {
    throw std::invalid_argument("stc_enhance: temporal gate width " + shape_str(tgate.shape) +
                                " does not match channels " + std::to_string(C));
  }
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    const double g = tgate.data[tc];
    double* dst = &y.data[tc * hw];
    for (std::size_t i = 0; i < hw; ++i) dst[i] *= g;
  }

  // Channel gate shared across frames.
  RealTensor pooled2 = ops::global_avg_pool(y);
  RealTensor avg({C});
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += pooled2(t, c);
    avg.data[c] = acc / static_cast<double>(T);
  }
  RealTensor cgate = ops::sigmoid_gate(ops::two_layer_mlp(avg, p.channel_w1, p.channel_w2));
  if (cgate.size() != C) {
    throw std::invalid_argument("stc_enhance: channel gate width " + shape_str(cgate.shape) +
                                " does not match channels " + std::to_string(C));
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = cgate.data[c];
      double* dst = &y.data[(t * C + c) * hw];
      for (std::size_t i = 0; i < hw; ++i) dst[i] *= g;
    }
  }
  return y;
}

RealTensor bca(const RealTensor& target, const RealTensor& source, const ExpertParams& e,
               Direction dir) {
  require_rank4(target, "bca");
  require_rank4(source, "bca");
  if (target.shape[0] != source.shape[0] || target.shape[1] != source.shape[1]) {
    throw std::invalid_argument("bca: streams disagree on frames or channels, " +
                                shape_str(target.shape) + " vs " + shape_str(source.shape));
  }
  const AttentionProjection& proj =
      dir == Direction::AudioToVisual ? e.audio_to_visual : e.visual_to_audio;

  RealTensor qf = stc_enhance(target, e.stc_q);
  RealTensor kf = stc_enhance(source, e.stc_k);
  RealTensor vf = stc_enhance(source, e.stc_v);

  const std::size_t T = target.shape[0], C = target.shape[1];
  const std::size_t nt = target.shape[2] * target.shape[3];
  const std::size_t ns = source.shape[2] * source.shape[3];
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));

  auto tokens = [C](const RealTensor& x, std::size_t t, std::size_t n) {
    // [C,H,W] slice of frame t viewed as [n,C] token rows.
    RealTensor tok({n, C});
    const std::size_t hw = n;
    const double* base = &x.data[t * C * hw];
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < hw; ++p) tok.data[p * C + c] = base[c * hw + p];
    }
    return tok;
  };

  RealTensor out = target;
  for (std::size_t t = 0; t < T; ++t) {
    RealTensor q = ops::matmul(tokens(qf, t, nt), proj.q);
    RealTensor k = ops::matmul(tokens(kf, t, ns), proj.k);
    RealTensor v = ops::matmul(tokens(vf, t, ns), proj.v);

    RealTensor scores({nt, ns});
    for (std::size_t i = 0; i < nt; ++i) {
      for (std::size_t j = 0; j < ns; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += q(i, c) * k(j, c);
        scores(i, j) = acc * scale;
      }
    }
    RealTensor attn = ops::softmax(scores);
    RealTensor mixed = ops::matmul(attn, v);
    RealTensor projected = ops::matmul(mixed, proj.out);

    double* dst = &out.data[t * C * nt];
    for (std::size_t p = 0; p < nt; ++p) {
      for (std::size_t c = 0; c < C; ++c) dst[c * nt + p] += projected(p, c);
    }
  }
  return out;
}

RealTensor route_weights(const RealTensor& counterpart, const RouterParams& r, RouteSide side) {
  require_rank4(counterpart, "route_weights");
  const StcParams& stc = side == RouteSide::ForVisual ? r.stc_a : r.stc_v;
  const RealTensor& w1 = side == RouteSide::ForVisual ? r.mlp_a_w1 : r.mlp_v_w1;
  const RealTensor& w2 = side == RouteSide::ForVisual ? r.mlp_a_w2 : r.mlp_v_w2;
  RealTensor pooled = ops::global_avg_pool(stc_enhance(counterpart, stc));
  RealTensor logits = ops::two_layer_mlp(pooled, w1, w2);
  return ops::softmax(logits);
}

DynamicK dynamic_k(std::span<const double> weights, double eps) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("dynamic_k: empty weight row");
  check_simplex(weights, "dynamic_k");

  double entropy = 0.0;
  for (double w : weights) entropy -= w * std::log(w + eps);

  const double ln_n = std::log(static_cast<double>(n));
  double norm = ln_n > 0.0 ? entropy / ln_n : 0.0;
  norm = std::clamp(norm, 0.0, 1.0);
  int k = static_cast<int>(std::ceil(norm * static_cast<double>(n)));
  k = std::clamp(k, 1, static_cast<int>(n));
  return {k, entropy};
}

std::vector<double> sparsify(std::span<const double> weights, int k) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("sparsify: empty weight row");
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw std::invalid_argument("sparsify: k = " + std::to_string(k) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<double> out(weights.begin(), weights.end());
  if (static_cast<std::size_t>(k) == n) return out;

  std::vector<std::size_t> kept = topk_indices(weights, k);
  double mass = 0.0;
  for (std::size_t idx : kept) mass += weights[idx];
  if (mass <= 0.0) {
    throw std::invalid_argument("sparsify: kept weights have zero mass");
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t idx : kept) out[idx] = weights[idx] / mass;
  return out;
}

namespace {

RoutingDecision decide(const RealTensor& dense, bool force_dense) {
  const std::size_t T = dense.shape[0], ne = dense.shape[1];
  RoutingDecision d;
  d.weights = dense;
  d.entropy = RealTensor({T});
  d.k_eff.resize(T);
  d.selected.resize(T);
  d.sparse_weights = RealTensor({T, ne});
  for (std::size_t t = 0; t < T; ++t) {
    std::span<const double> row(&dense.data[t * ne], ne);
    DynamicK dk = dynamic_k(row);
    const int k = force_dense ? static_cast<int>(ne) : dk.k_eff;
    d.entropy(t) = dk.entropy;
    d.k_eff[t] = k;
    d.selected[t] = topk_indices(row, k);
    std::vector<double> sparse = sparsify(row, k);
    std::copy(sparse.begin(), sparse.end(), &d.sparse_weights.data[t * ne]);
  }
  return d;
}

}  // namespace

ScmcOutput scmc_forward(const RealTensor& visual, const RealTensor& audio,
                        const ScmcParams& params, bool force_dense) {
  require_rank4(visual, "scmc_forward");
  require_rank4(audio, "scmc_forward");
  if (visual.shape[0] != audio.shape[0] || visual.shape[1] != audio.shape[1]) {
    throw std::invalid_argument("scmc_forward: streams disagree on frames or channels, " +
                                shape_str(visual.shape) + " vs " + shape_str(audio.shape));
  }
  const std::size_t ne = params.experts.size();
  if (ne == 0) throw std::invalid_argument("scmc_forward: no experts");

  RealTensor wv = route_weights(audio, params.router, RouteSide::ForVisual);
  RealTensor wa = route_weights(visual, params.router, RouteSide::ForAudio);
  if (wv.shape[1] != ne || wa.shape[1] != ne) {
    throw std::invalid_argument("scmc_forward: router emits " + std::to_string(wv.shape[1]) +
                                " weights for " + std::to_string(ne) + " experts");
  }

  ScmcOutput out;
  out.visual_routing = decide(wv, force_dense);
  out.audio_routing = decide(wa, force_dense);

  const std::size_t T = visual.shape[0];
  auto aggregate = [&](const RealTensor& target, const RealTensor& source, Direction dir,
                       const RoutingDecision& routing) {
    std::vector<char> used(ne, 0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t e = 0; e < ne; ++e) {
        if (routing.sparse_weights(t, e) != 0.0) used[e] = 1;
      }
    }
    std::vector<RealTensor> expert_out(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      if (used[e]) expert_out[e] = bca(target, source, params.experts[e], dir);
    }
    RealTensor acc(target.shape);
    const std::size_t frame = target.shape[1] * target.shape[2] * target.shape[3];
    for (std::size_t t = 0; t < T; ++t) {
      double* dst = &acc.data[t * frame];
      for (std::size_t e = 0; e < ne; ++e) {
        const double w = routing.sparse_weights(t, e);
        if (w == 0.0) continue;
        const double* src = &expert_out[e].data[t * frame];
        for (std::size_t i = 0; i < frame; ++i) dst[i] += w * src[i];
      }
    }
    return acc;
  };

  out.visual = aggregate(visual, audio, Direction::AudioToVisual, out.visual_routing);
  out.audio = aggregate(audio, visual, Direction::VisualToAudio, out.audio_routing);
  return out;
}

}  // namespace favs::scmc
