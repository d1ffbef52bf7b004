#pragma once

#include <array>
#include <utility>

#include "favs/spectral.hpp"
#include "favs/tensor.hpp"

namespace favs::fded {

enum class Modality { Visual, Audio };

/// Parameters for one frequency-band enhancement block. The depthwise 3x3
/// stack and the grouped 1x1 mixing run in the spatial domain before the
/// transform; the remaining fields drive the per-band treatment.
struct FdedParams {
  RealTensor dwc_kernels;    // [C,3,3] depthwise spatial kernels
  RealTensor group_weights;  // [G,C/G,C/G] grouped 1x1 channel mixing
  RealTensor conv3d_kernel;  // [C,kt,kh,kw] visual high-band refinement
  RealTensor ca_w1;          // [C,C/r] audio channel-attention squeeze
  RealTensor ca_w2;          // [C/r,C] audio channel-attention expand
  std::array<double, 4> band_weights_v{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> band_weights_a{1.0, 1.0, 1.0, 1.0};
  spectral::ThresholdLadder ladder;
  // Identity closure switch: with enhancement off, identity kernels and unit
  // band weights make the whole block reproduce its input up to transform
  // round-off.
  bool enhance_high = true;
};

struct FdedOutput {
  RealTensor features;          // [T,C,H,W] recomposed spatial features
  spectral::BandSet bands;      // pre-enhancement band spectra
  ComplexTensor enhanced_high;  // high band after enhancement and re-masking
};

/// Spatial front end: depthwise 3x3 per channel, then grouped 1x1 mixing,
/// then the forward 2D transform of the mixed features.
std::pair<RealTensor, ComplexTensor> preprocess(const RealTensor& x, const FdedParams& p);

/// High-band refinement for visual features: depthwise 3D convolution over
/// (T,H,W) applied to the band spectrum, plus the untouched band as a
/// residual. The result is masked back onto the high-band annulus so the
/// other bands stay untouched.
ComplexTensor enhance_high_visual(const ComplexTensor& band, const FdedParams& p);

/// High-band refinement for audio features: squeeze the band magnitudes to
/// [T,C], gate through a bottleneck MLP with a logistic output, and scale
/// each channel's bins by its gate.
ComplexTensor enhance_high_audio(const ComplexTensor& band, const FdedParams& p);

/// Weighted inverse-transform recomposition of a band set. Bands are
/// accumulated in high, mid, low, residual order.
RealTensor recompose(const spectral::BandSet& bands, const std::array<double, 4>& weights);

/// Full block: preprocess, band split, modality-specific high-band
/// enhancement, weighted recomposition.
FdedOutput fded_forward(const RealTensor& x, Modality modality, const FdedParams& p);

}  // namespace favs::fded
