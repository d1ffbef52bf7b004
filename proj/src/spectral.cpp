#include "favs/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "favs/parallel.hpp"

namespace favs::spectral {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place iterative radix-2 FFT, length must be a power of two.
/// sign = -1 forward, +1 inverse (no normalization).
void fft_pow2(cd* a, std::size_t n, int sign) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cd u = a[i + j];
        const cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Arbitrary-length DFT via the chirp-z (Bluestein) factorization.
/// Twiddle exponents are reduced mod 2n before the trig call to keep
/// precision at large indices.
void fft_bluestein(cd* a, std::size_t n, int sign) {
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cd> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t sq = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n);
    chirp[k] = cd(std::cos(ang), std::sin(ang));
  }
  std::vector<cd> fa(m, cd(0, 0)), fb(m, cd(0, 0));
  for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
  fb[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
  fft_pow2(fa.data(), m, -1);
  fft_pow2(fb.data(), m, -1);
  for (std::size_t k = 0; k < m; ++k) fa[k] *= fb[k];
  fft_pow2(fa.data(), m, +1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * inv_m * chirp[k];
}

void fft_1d(cd* a, std::size_t n, int sign) {
  if (n == 1) return;
  if (is_pow2(n)) {
    fft_pow2(a, n, sign);
  } else {
    fft_bluestein(a, n, sign);
  }
}

void check_spatial(const Shape& shape, const char* what) {
  if (shape.size() < 2) {
    throw std::invalid_argument(std::string(what) + " needs at least two axes, got shape " +
                                shape_str(shape));
  }
}

/// Transform the trailing two axes of every batch slice. sign=-1 forward;
/// sign=+1 applies the inverse with 1/(H*W) folded in.
void transform_slices(ComplexTensor& x, int sign) {
  const std::size_t w = x.shape[x.rank() - 1];
  const std::size_t h = x.shape[x.rank() - 2];
  const std::size_t batch = x.size() / (h * w);
  parallel_for(batch, [&](std::size_t begin, std::size_t end) {
    std::vector<cd> column(h);
    for (std::size_t b = begin; b < end; ++b) {
      cd* slice = &x.data[b * h * w];
      for (std::size_t row = 0; row < h; ++row) fft_1d(slice + row * w, w, sign);
      for (std::size_t col = 0; col < w; ++col) {
        for (std::size_t row = 0; row < h; ++row) column[row] = slice[row * w + col];
        fft_1d(column.data(), h, sign);
        for (std::size_t row = 0; row < h; ++row) slice[row * w + col] = column[row];
      }
      if (sign > 0) {
        const double inv = 1.0 / static_cast<double>(h * w);
        for (std::size_t i = 0; i < h * w; ++i) slice[i] *= inv;
      }
    }
  });
}

}  // namespace

void ThresholdLadder::validate() const {
  if (taus[0] != 1.0) {
    throw std::invalid_argument("threshold ladder must start at 1.0, got " +
                                std::to_string(taus[0]));
  }
  for (int i = 0; i < 3; ++i) {
    if (!(taus[i] > taus[i + 1])) {
      throw std::invalid_argument("threshold ladder must be strictly decreasing");
    }
  }
  if (taus[3] < 0.0) {
    throw std::invalid_argument("threshold ladder values must be nonnegative");
  }
}

ComplexTensor fft2(const RealTensor& x) { return fft2(complexify(x)); }

ComplexTensor fft2(const ComplexTensor& x) {
  check_spatial(x.shape, "fft2");
  ComplexTensor out = x;
  transform_slices(out, -1);
  return out;
}

ComplexTensor ifft2(const ComplexTensor& x) {
  check_spatial(x.shape, "ifft2");
  ComplexTensor out = x;
  transform_slices(out, +1);
  return out;
}

ComplexTensor naive_dft2(const RealTensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("naive_dft2 expects a rank-2 tensor, got shape " +
                                shape_str(x.shape));
  }
  const std::size_t h = x.shape[0], w = x.shape[1];
  if (h * w > 4096) {
    throw std::invalid_argument("naive_dft2 size guard: " + std::to_string(h * w) +
                                " bins exceeds 4096");
  }
  ComplexTensor out({h, w});
  const double tau_h = 2.0 * std::numbers::pi / static_cast<double>(h);
  const double tau_w = 2.0 * std::numbers::pi / static_cast<double>(w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      cd acc(0.0, 0.0);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double ang = -(tau_h * static_cast<double>(u * y) +
                               tau_w * static_cast<double>(v * xx));
          acc += x(y, xx) * cd(std::cos(ang), std::sin(ang));
        }
      }
      out(u, v) = acc;
    }
  }
  return out;
}

RadialGrid radial_grid(std::size_t h, std::size_t w) {
  if (h < 1 || w < 1) {
    throw std::invalid_argument("radial_grid extents must be >= 1");
  }
  RealTensor mags({h, w});
  const double half_h = static_cast<double>(std::max<std::size_t>(h / 2, 1));
  const double half_w = static_cast<double>(std::max<std::size_t>(w / 2, 1));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t u = 0; u < h; ++u) {
    const double cu = (u <= h / 2) ? static_cast<double>(u)
                                   : static_cast<double>(u) - static_cast<double>(h);
    const double fu = cu / half_h;
    for (std::size_t v = 0; v < w; ++v) {
      const double cv = (v <= w / 2) ? static_cast<double>(v)
                                     : static_cast<double>(v) - static_cast<double>(w);
      const double fv = cv / half_w;
      mags(u, v) = std::min(1.0, std::sqrt(fu * fu + fv * fv) * inv_sqrt2);
    }
  }
  return RadialGrid{std::move(mags)};
}

namespace {

/// Annulus bounds for a band: bins with lo < |w| <= hi belong to it.
/// The residual keeps |w| <= tau3.
std::pair<double, double> band_bounds(const ThresholdLadder& ladder, Band band) {
  switch (band) {
    case Band::High:
      return {ladder.taus[1], ladder.taus[0]};
    case Band::Mid:
      return {ladder.taus[2], ladder.taus[1]};
    case Band::Low:
      return {ladder.taus[3], ladder.taus[2]};
    case Band::Residual:
      return {-1.0, ladder.taus[3]};
  }
  throw std::invalid_argument("unknown band");
}

}  // namespace

BandSet residual_decompose(const ComplexTensor& spectrum, const ThresholdLadder& ladder) {
  check_spatial(spectrum.shape, "residual_decompose");
  ladder.validate();
  const std::size_t w = spectrum.shape[spectrum.rank() - 1];
  const std::size_t h = spectrum.shape[spectrum.rank() - 2];
  const RadialGrid grid = radial_grid(h, w);
  const std::size_t batch = spectrum.size() / (h * w);

  BandSet bands;
  bands.ladder = ladder;
  bands.source_shape = spectrum.shape;
  bands.high = ComplexTensor(spectrum.shape);
  bands.mid = ComplexTensor(spectrum.shape);
  bands.low = ComplexTensor(spectrum.shape);
  bands.residual = ComplexTensor(spectrum.shape);

  ComplexTensor remainder = spectrum;
  ComplexTensor* named[3] = {&bands.high, &bands.mid, &bands.low};
  for (int i = 1; i <= 3; ++i) {
    const double hi = ladder.taus[i - 1];
    const double lo = ladder.taus[i];
    ComplexTensor& dst = *named[i - 1];
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t p = 0; p < h * w; ++p) {
        const double mag = grid.magnitudes.data[p];
        if (mag > lo && mag <= hi) {
          dst.data[b * h * w + p] = remainder.data[b * h * w + p];
          remainder.data[b * h * w + p] = cd(0.0, 0.0);
        }
      }
    }
  }
  bands.residual = std::move(remainder);
  return bands;
}

ComplexTensor apply_band_mask(const ComplexTensor& spectrum, const ThresholdLadder& ladder,
                              Band band) {
  check_spatial(spectrum.shape, "apply_band_mask");
  ladder.validate();
  const std::size_t w = spectrum.shape[spectrum.rank() - 1];
  const std::size_t h = spectrum.shape[spectrum.rank() - 2];
  const RadialGrid grid = radial_grid(h, w);
  const auto [lo, hi] = band_bounds(ladder, band);
  const std::size_t batch = spectrum.size() / (h * w);
  ComplexTensor out(spectrum.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < h * w; ++p) {
      const double mag = grid.magnitudes.data[p];
      if (mag > lo && mag <= hi) out.data[b * h * w + p] = spectrum.data[b * h * w + p];
    }
  }
  return out;
}

double band_energy(const ComplexTensor& x) {
  double acc = 0.0;
  for (const auto& v : x.data) acc += v.real() * v.real() + v.imag() * v.imag();
  return acc;
}

}  // namespace favs::spectral
