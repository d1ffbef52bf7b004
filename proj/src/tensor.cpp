#include "favs/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace favs {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ",";
    out << s[i];
  }
  out << "]";
  return out.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {
void check_rank(const Shape& s) {
  if (s.empty() || s.size() > 5) {
    throw std::invalid_argument("tensor rank must be 1..5, got shape " + shape_str(s));
  }
}
}  // namespace

RealTensor::RealTensor(Shape s, double fill) {
  check_rank(s);
  shape = std::move(s);
  data.assign(shape_numel(shape), fill);
}

RealTensor RealTensor::from(Shape s, std::vector<double> values) {
  check_rank(s);
  if (shape_numel(s) != values.size()) {
    throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(s));
  }
  RealTensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

ComplexTensor::ComplexTensor(Shape s, std::complex<double> fill) {
  check_rank(s);
  shape = std::move(s);
  data.assign(shape_numel(shape), fill);
}

ComplexTensor ComplexTensor::from(Shape s, std::vector<std::complex<double>> values) {
  check_rank(s);
  if (shape_numel(s) != values.size()) {
    throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(s));
  }
  ComplexTensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

RealTensor real_part(const ComplexTensor& x) {
  RealTensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i].real();
  return out;
}

ComplexTensor complexify(const RealTensor& x) {
  ComplexTensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = {x.data[i], 0.0};
  return out;
}

RealTensor InitSpec::make(Shape shape) const {
  switch (scheme) {
    case InitScheme::Zeros:
      return RealTensor(std::move(shape), 0.0);
    case InitScheme::Ones:
      return RealTensor(std::move(shape), 1.0);
    case InitScheme::UniformScaled: {
      RealTensor t(std::move(shape));
      SplitMix64 rng(seed);
      for (auto& v : t.data) v = rng.next_symmetric(scale);
      return t;
    }
  }
  throw std::invalid_argument("unknown init scheme");
}

}  // namespace favs
