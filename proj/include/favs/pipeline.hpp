#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "favs/fded.hpp"
#include "favs/fixtures.hpp"
#include "favs/scmc.hpp"
#include "favs/spectral.hpp"
#include "favs/tensor.hpp"

namespace favs::pipeline {

struct QueryParams {
  RealTensor embed;   // [N_q,C] learned query table
  RealTensor mlp_w1;  // [C,C]
  RealTensor mlp_w2;  // [C,C]
};

struct DecoderParams {
  scmc::AttentionProjection attn;  // queries attend over visual tokens
  RealTensor pix;                  // [C,C] pixel embedding projection
  RealTensor cls;                  // [C,classes]
};

struct StageParams {
  fded::FdedParams fded_visual;
  fded::FdedParams fded_audio;
  scmc::ScmcParams cross;
  RealTensor fuse;  // [C,2C] 1x1 fusion of upstream output with the stage input; empty at stage 1
};

struct ModelConfig {
  std::size_t stages = 3;
  std::size_t channels = 32;
  std::size_t experts = 4;
  std::size_t queries = 8;
  std::size_t classes = 2;
  std::size_t groups = 4;
  std::size_t reduction = 4;
  std::size_t size = 64;  // base frame resolution; stage i runs at size/2^(i+1)
  std::uint64_t seed = 42;
  bool force_dense = false;
  spectral::ThresholdLadder ladder;

  void validate() const;
};

struct ModelParams {
  std::vector<StageParams> stages;
  QueryParams queries;
  DecoderParams decoder;
};

/// Parse key=value lines ('#' comments, blank lines allowed). Unknown or
/// repeated keys are rejected.
ModelConfig parse_config(const std::string& text);

/// Deterministic parameter draw: the config seed fully determines every
/// tensor.
ModelParams init_params(const ModelConfig& cfg);

fixtures::FtenContainer params_to_container(const ModelParams& p);

/// Rebuild parameters from a container, checking every entry name and shape
/// against the config before anything runs.
ModelParams params_from_container(const fixtures::FtenContainer& c, const ModelConfig& cfg);

struct StageRouting {
  scmc::RoutingDecision visual;
  scmc::RoutingDecision audio;
};

struct StageOutput {
  RealTensor visual;  // final-stage visual features
  RealTensor audio;   // final-stage audio features
  std::vector<StageRouting> routing;  // one record per stage
};

/// Coarse-to-fine cascade. Stage 1 consumes the coarsest backbone level and
/// the raw audio features; each later stage fuses the upsampled previous
/// output with its own backbone level and reuses the refined audio stream.
StageOutput run_stages(const std::vector<RealTensor>& stage_features,
                       const RealTensor& audio_features, const ModelConfig& cfg,
                       const ModelParams& params);

/// Audio-conditioned query set: per-frame pooled audio through the query MLP,
/// broadcast against the learned embeddings. Result is [T,N_q,C].
RealTensor derive_queries(const RealTensor& audio_final, const QueryParams& qp);

struct Prediction {
  RealTensor mask_logits;   // [T,N_q,H,W] at base resolution
  RealTensor class_logits;  // [T,N_q,classes]
  RealTensor binary_mask;   // [T,H,W] zeros and ones
};

/// One cross-attention refinement of the queries over visual tokens, then
/// dot-product mask logits against projected pixel embeddings, upsampled to
/// (out_h, out_w). The binary map keeps pixels where the best query clears
/// a 0.5 logistic threshold.
Prediction decode_masks(const RealTensor& queries, const RealTensor& visual_final,
                        const DecoderParams& head, std::size_t out_h, std::size_t out_w);

std::vector<double> jaccard_per_frame(const RealTensor& pred, const RealTensor& gt);
std::vector<double> fscore_per_frame(const RealTensor& pred, const RealTensor& gt);

/// Frame-averaged region overlap (intersection over union; empty-vs-empty
/// counts as a perfect frame).
double metric_jaccard(const RealTensor& pred, const RealTensor& gt);

/// Frame-averaged F-measure with beta^2 = 0.3.
double metric_fscore(const RealTensor& pred, const RealTensor& gt);

}  // namespace favs::pipeline
