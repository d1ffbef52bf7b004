#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace favs {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Dense row-major tensor of 64-bit floats, rank 1 to 5.
struct RealTensor {
  Shape shape;
  std::vector<double> data;

  RealTensor() = default;
  explicit RealTensor(Shape s, double fill = 0.0);
  static RealTensor from(Shape s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t extent(std::size_t axis) const { return shape[axis]; }

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  bool same_shape(const RealTensor& other) const { return shape == other.shape; }
};

/// Dense row-major tensor of complex 64-bit floats (interleaved re/im pairs).
struct ComplexTensor {
  Shape shape;
  std::vector<std::complex<double>> data;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s, std::complex<double> fill = {0.0, 0.0});
  static ComplexTensor from(Shape s, std::vector<std::complex<double>> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t extent(std::size_t axis) const { return shape[axis]; }

  std::complex<double>& operator()(std::size_t i) { return data[i]; }
  const std::complex<double>& operator()(std::size_t i) const { return data[i]; }
  std::complex<double>& operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  const std::complex<double>& operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  bool same_shape(const ComplexTensor& other) const { return shape == other.shape; }
};

RealTensor real_part(const ComplexTensor& x);
ComplexTensor complexify(const RealTensor& x);

/// SplitMix64 stream. State advances by 0x9E3779B97F4A7C15; outputs are mixed
/// with the 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB xor-shift-multiply chain.
/// Integer-only, so sequences are bit-identical on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [-scale, +scale).
  double next_symmetric(double scale) { return scale * (2.0 * next_double() - 1.0); }

 private:
  std::uint64_t state_;
};

enum class InitScheme { UniformScaled, Zeros, Ones };

/// Deterministic tensor initializer: (seed, scheme, scale, shape) fully
/// determine the bits of the result.
struct InitSpec {
  std::uint64_t seed = 0;
  InitScheme scheme = InitScheme::UniformScaled;
  double scale = 1.0;

  RealTensor make(Shape shape) const;
};

}  // namespace favs
