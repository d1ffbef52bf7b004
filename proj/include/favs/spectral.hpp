#pragma once

#include <array>

#include "favs/tensor.hpp"

namespace favs::spectral {

/// Ordered radial thresholds (tau0, tau1, tau2, tau3), strictly decreasing
/// with tau0 == 1.0 so the outermost band reaches the spectrum corner.
struct ThresholdLadder {
  std::array<double, 4> taus{1.0, 0.6, 0.3, 0.1};

  void validate() const;
};

/// Normalized radial frequency magnitude per FFT bin: 0 at DC, 1 at the
/// farthest corner. Frequencies above the axis midpoint wrap negative.
struct RadialGrid {
  RealTensor magnitudes;  // [H,W]
};

/// The four disjoint sub-spectra produced by residual decomposition. Each bin
/// of the source appears in exactly one member, so high+mid+low+residual
/// reproduces the source bit for bit.
struct BandSet {
  ComplexTensor high;
  ComplexTensor mid;
  ComplexTensor low;
  ComplexTensor residual;
  ThresholdLadder ladder;
  Shape source_shape;
};

enum class Band { High, Mid, Low, Residual };

/// Unnormalized forward DFT over the last two axes, batched over the rest.
/// Power-of-two extents use radix-2; everything else goes through Bluestein.
ComplexTensor fft2(const RealTensor& x);
ComplexTensor fft2(const ComplexTensor& x);

/// Inverse transform with 1/(H*W) normalization: ifft2(fft2(x)) == x.
ComplexTensor ifft2(const ComplexTensor& x);

/// Direct O((HW)^2) double-sum DFT. Test oracle; shares no code with fft2.
/// Guarded to H*W <= 4096.
ComplexTensor naive_dft2(const RealTensor& x);

RadialGrid radial_grid(std::size_t h, std::size_t w);

/// Iterative residual band extraction: band i copies the bins of the current
/// remainder with tau_i < |w| <= tau_{i-1} and subtracts them; whatever is
/// left after three bands (DC included) is the residual.
BandSet residual_decompose(const ComplexTensor& spectrum, const ThresholdLadder& ladder);

/// Zeroes every bin outside the given band's annulus.
ComplexTensor apply_band_mask(const ComplexTensor& spectrum, const ThresholdLadder& ladder,
                              Band band);

/// Sum of squared magnitudes in row-major order.
double band_energy(const ComplexTensor& x);

}  // namespace favs::spectral
