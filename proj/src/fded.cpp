#include "favs/fded.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "favs/ops.hpp"

namespace favs::fded {

std::pair<RealTensor, ComplexTensor> preprocess(const RealTensor& x, const FdedParams& p) {
  RealTensor depthwise = ops::depthwise_conv2d(x, p.dwc_kernels);
  RealTensor mixed = ops::grouped_pointwise_conv(depthwise, p.group_weights);
  ComplexTensor spectrum = spectral::fft2(mixed);
  return {std::move(mixed), std::move(spectrum)};
}

ComplexTensor enhance_high_visual(const ComplexTensor& band, const FdedParams& p) {
  ComplexTensor refined = ops::conv3d_residual(band, p.conv3d_kernel);
  return spectral::apply_band_mask(refined, p.ladder, spectral::Band::High);
}

ComplexTensor enhance_high_audio(const ComplexTensor& band, const FdedParams& p) {
  if (band.shape.size() != 4) {
    throw std::invalid_argument("enhance_high_audio: expected rank-4 band, got " +
                                shape_str(band.shape));
  }
  const std::size_t T = band.shape[0], C = band.shape[1];
  const std::size_t hw = band.shape[2] * band.shape[3];
  if (hw == 0) throw std::invalid_argument("enhance_high_audio: empty spatial extent");

  RealTensor squeezed({T, C});
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    double acc = 0.0;
    const std::complex<double>* bin = &band.data[tc * hw];
    for (std::size_t i = 0; i < hw; ++i) acc += std::abs(bin[i]);
    squeezed.data[tc] = acc / static_cast<double>(hw);
  }

  RealTensor gates = ops::sigmoid_gate(ops::two_layer_mlp(squeezed, p.ca_w1, p.ca_w2));
  if (gates.shape[1] != C) {
    throw std::invalid_argument("enhance_high_audio: gate width " + shape_str(gates.shape) +
                                " does not match channel count " + std::to_string(C));
  }

  ComplexTensor gated(band.shape);
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    const double g = gates.data[tc];
    const std::complex<double>* src = &band.data[tc * hw];
    std::complex<double>* dst = &gated.data[tc * hw];
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * g;
  }
  return spectral::apply_band_mask(gated, p.ladder, spectral::Band::High);
}

RealTensor recompose(const spectral::BandSet& bands, const std::array<double, 4>& weights) {
  const ComplexTensor* order[4] = {&bands.high, &bands.mid, &bands.low, &bands.residual};
  RealTensor acc(bands.high.shape);
  for (int b = 0; b < 4; ++b) {
    RealTensor spatial = real_part(spectral::ifft2(*order[b]));
    const double w = weights[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += w * spatial.data[i];
  }
  return acc;
}

FdedOutput fded_forward(const RealTensor& x, Modality modality, const FdedParams& p) {
  p.ladder.validate();
  auto [mixed, spectrum] = preprocess(x, p);
  (void)mixed;
  spectral::BandSet bands = spectral::residual_decompose(spectrum, p.ladder);

  ComplexTensor enhanced = bands.high;
  if (p.enhance_high) {
    enhanced = modality == Modality::Visual ? enhance_high_visual(bands.high, p)
                                            : enhance_high_audio(bands.high, p);
  }

  spectral::BandSet recombined = bands;
  recombined.high = enhanced;
  const auto& weights = modality == Modality::Visual ? p.band_weights_v : p.band_weights_a;

  FdedOutput out;
  out.features = recompose(recombined, weights);
  out.bands = std::move(bands);
  out.enhanced_high = std::move(enhanced);
  return out;
}

}  // namespace favs::fded
