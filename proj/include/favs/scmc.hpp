#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "favs/tensor.hpp"

namespace favs::scmc {

/// Spatial, temporal and channel gating applied in sequence. Each gate is a
/// logistic rescaling of the current tensor, so zero weights leave a uniform
/// 0.5 gate at every step.
struct StcParams {
  RealTensor spatial_gate;  // [1,k,k] kernel over the channel-mean map
  RealTensor temporal_w1;   // [C,C/r]
  RealTensor temporal_w2;   // [C/r,C]
  RealTensor channel_w1;    // [C,C/r]
  RealTensor channel_w2;    // [C/r,C]
};

struct AttentionProjection {
  RealTensor q;    // [C,C]
  RealTensor k;    // [C,C]
  RealTensor v;    // [C,C]
  RealTensor out;  // [C,C]
};

/// One cross-modal expert: shared gating stacks for the query/key/value
/// streams plus a projection set per direction.
struct ExpertParams {
  StcParams stc_q;
  StcParams stc_k;
  StcParams stc_v;
  AttentionProjection audio_to_visual;
  AttentionProjection visual_to_audio;
};

enum class Direction { AudioToVisual, VisualToAudio };

/// Router trunk. Weights for the visual mixture come from the audio stream
/// and vice versa, so each modality is scored by its counterpart.
struct RouterParams {
  StcParams stc_a;
  StcParams stc_v;
  RealTensor mlp_a_w1;  // [C,C/2]
  RealTensor mlp_a_w2;  // [C/2,N_e]
  RealTensor mlp_v_w1;  // [C,C/2]
  RealTensor mlp_v_w2;  // [C/2,N_e]
};

enum class RouteSide { ForVisual, ForAudio };

struct ScmcParams {
  std::vector<ExpertParams> experts;
  RouterParams router;
};

/// Per-frame routing record for one mixture side.
struct RoutingDecision {
  RealTensor weights;         // [T,N_e] dense softmax weights
  RealTensor entropy;         // [T]
  std::vector<int> k_eff;     // [T]
  std::vector<std::vector<std::size_t>> selected;  // kept expert indices per frame
  RealTensor sparse_weights;  // [T,N_e] renormalized top-k weights
};

struct ScmcOutput {
  RealTensor visual;  // [T,C,H,W]
  RealTensor audio;   // [T,C,H,W]
  RoutingDecision visual_routing;
  RoutingDecision audio_routing;
};

/// Sequential spatial -> temporal -> channel gating of a [T,C,H,W] tensor.
RealTensor stc_enhance(const RealTensor& x, const StcParams& p);

/// Bidirectional cross-attention step for one direction: tokens of `target`
/// attend over tokens of `source`, single head, 1/sqrt(C) scaling, residual
/// add of the raw target.
RealTensor bca(const RealTensor& target, const RealTensor& source, const ExpertParams& e,
               Direction dir);

/// Dense routing weights, one row per frame, from the counterpart modality.
RealTensor route_weights(const RealTensor& counterpart, const RouterParams& r, RouteSide side);

struct DynamicK {
  int k_eff;
  double entropy;
};

/// Entropy-adaptive expert count for one simplex row of mixture weights.
DynamicK dynamic_k(std::span<const double> weights, double eps = 1e-8);

/// Keep the k largest entries (ties broken toward the lower index),
/// renormalize the kept mass. k equal to the row width returns the row
/// unchanged.
std::vector<double> sparsify(std::span<const double> weights, int k);

/// Full cross-modal block over aligned [T,C,H,W] streams. `force_dense`
/// pins every frame to the full expert set.
ScmcOutput scmc_forward(const RealTensor& visual, const RealTensor& audio,
                        const ScmcParams& params, bool force_dense = false);

}  // namespace favs::scmc
