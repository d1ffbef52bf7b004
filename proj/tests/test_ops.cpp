#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "favs/ops.hpp"
#include "favs/parallel.hpp"
#include "favs/tensor.hpp"

using namespace favs;

namespace {

RealTensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  return InitSpec{seed, InitScheme::UniformScaled, scale}.make(std::move(shape));
}

RealTensor identity_kernels(std::size_t c, std::size_t k) {
  RealTensor kern({c, k, k});
  for (std::size_t ch = 0; ch < c; ++ch) kern(ch, k / 2, k / 2) = 1.0;
  return kern;
}

RealTensor identity_groups(std::size_t g, std::size_t cg) {
  RealTensor w({g, cg, cg});
  for (std::size_t gi = 0; gi < g; ++gi) {
    for (std::size_t i = 0; i < cg; ++i) w(gi, i, i) = 1.0;
  }
  return w;
}

double max_abs_diff(const RealTensor& a, const RealTensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("depthwise conv basics") {
  RealTensor zeros({1, 2, 4, 4});
  RealTensor kern = random_tensor({2, 3, 3}, 10);
  RealTensor out = ops::depthwise_conv2d(zeros, kern);
  for (double v : out.data) CHECK(v == 0.0);

  RealTensor x = random_tensor({2, 3, 5, 4}, 11);
  RealTensor same = ops::depthwise_conv2d(x, identity_kernels(3, 3));
  CHECK(same.data == x.data);
}

TEST_CASE("depthwise conv zero padding counts") {
  RealTensor ones({1, 1, 4, 4}, 1.0);
  RealTensor kern({1, 3, 3}, 1.0);
  RealTensor out = ops::depthwise_conv2d(ones, kern);
  CHECK(out(0, 0, 1, 1) == 9.0);
  CHECK(out(0, 0, 0, 0) == 4.0);
  CHECK(out(0, 0, 0, 1) == 6.0);
  CHECK(out(0, 0, 3, 3) == 4.0);
}

TEST_CASE("depthwise conv validation") {
  RealTensor x({1, 2, 4, 4});
  CHECK_THROWS_AS(ops::depthwise_conv2d(x, RealTensor({3, 3, 3})), std::invalid_argument);
  CHECK_THROWS_AS(ops::depthwise_conv2d(x, RealTensor({2, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(ops::depthwise_conv2d(RealTensor({4, 4}), RealTensor({2, 3, 3})),
                  std::invalid_argument);
}

TEST_CASE("grouped pointwise conv") {
  RealTensor x = random_tensor({2, 4, 3, 3}, 20);

  SUBCASE("identity groups pass through") {
    RealTensor out = ops::grouped_pointwise_conv(x, identity_groups(2, 2));
    CHECK(out.data == x.data);
  }

  SUBCASE("single group is a full channel mix") {
    RealTensor w = random_tensor({1, 4, 4}, 21);
    RealTensor out = ops::grouped_pointwise_conv(x, w);
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t co = 0; co < 4; ++co) {
        for (std::size_t p = 0; p < 9; ++p) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < 4; ++ci) {
            acc += w.data[co * 4 + ci] * x.data[(t * 4 + ci) * 9 + p];
          }
          CHECK(out.data[(t * 4 + co) * 9 + p] == doctest::Approx(acc).epsilon(1e-15));
        }
      }
    }
  }

  SUBCASE("one group per channel scales channels") {
    RealTensor w({4, 1, 1});
    w.data = {2.0, -1.0, 0.5, 3.0};
    RealTensor out = ops::grouped_pointwise_conv(x, w);
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t p = 0; p < 9; ++p) {
          CHECK(out.data[(t * 4 + c) * 9 + p] == w.data[c] * x.data[(t * 4 + c) * 9 + p]);
        }
      }
    }
  }

  SUBCASE("group count must divide channels") {
    CHECK_THROWS_AS(ops::grouped_pointwise_conv(x, RealTensor({3, 2, 2})),
                    std::invalid_argument);
  }
}

TEST_CASE("conv3d residual") {
  ComplexTensor x({2, 2, 3, 3});
  SplitMix64 rng(30);
  for (auto& v : x.data) v = {rng.next_symmetric(1.0), rng.next_symmetric(1.0)};

  SUBCASE("zero kernel leaves the input") {
    ComplexTensor out = ops::conv3d_residual(x, RealTensor({2, 3, 3, 3}));
    CHECK(out.data == x.data);
  }

  SUBCASE("zero input stays zero") {
    ComplexTensor z({2, 2, 3, 3});
    RealTensor kern = random_tensor({2, 3, 3, 3}, 31);
    ComplexTensor out = ops::conv3d_residual(z, kern);
    for (const auto& v : out.data) CHECK(v == std::complex<double>(0.0, 0.0));
  }

  SUBCASE("kt=1 on one frame reduces to the 2d depthwise path") {
    ComplexTensor one({1, 2, 4, 4});
    for (auto& v : one.data) v = {rng.next_symmetric(1.0), rng.next_symmetric(1.0)};
    RealTensor k3 = random_tensor({2, 3, 3}, 32);
    RealTensor k4({2, 1, 3, 3});
    k4.data = k3.data;

    ComplexTensor out = ops::conv3d_residual(one, k4);
    RealTensor re = ops::depthwise_conv2d(real_part(one), k3);
    ComplexTensor img({1, 2, 4, 4});
    for (std::size_t i = 0; i < one.size(); ++i) img.data[i] = {one.data[i].imag(), 0.0};
    RealTensor im = ops::depthwise_conv2d(real_part(img), k3);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.data[i].real() ==
            doctest::Approx(re.data[i] + one.data[i].real()).epsilon(1e-14));
      CHECK(out.data[i].imag() ==
            doctest::Approx(im.data[i] + one.data[i].imag()).epsilon(1e-14));
    }
  }

  SUBCASE("channel mismatch is rejected") {
    CHECK_THROWS_AS(ops::conv3d_residual(x, RealTensor({3, 3, 3, 3})), std::invalid_argument);
    CHECK_THROWS_AS(ops::conv3d_residual(x, RealTensor({2, 2, 3, 3})), std::invalid_argument);
  }
}

TEST_CASE("softmax") {
  SUBCASE("uniform on zeros") {
    RealTensor x({4});
    RealTensor out = ops::softmax(x);
    for (double v : out.data) CHECK(v == 0.25);
  }

  SUBCASE("large logits stay finite") {
    RealTensor x = RealTensor::from({2}, {1000.0, 0.0});
    RealTensor out = ops::softmax(x);
    CHECK(std::isfinite(out(0)));
    CHECK(out(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out(1) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("closed form on (ln 2, 0, 0)") {
    RealTensor x = RealTensor::from({3}, {std::log(2.0), 0.0, 0.0});
    RealTensor out = ops::softmax(x);
    CHECK(out(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out(1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(out(2) == doctest::Approx(0.25).epsilon(1e-15));
  }

  SUBCASE("rows are simplex points and keep the argmax") {
    RealTensor x = random_tensor({5, 7}, 40, 3.0);
    RealTensor out = ops::softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double sum = 0.0;
      std::size_t arg_in = 0, arg_out = 0;
      for (std::size_t i = 0; i < 7; ++i) {
        const double v = out(r, i);
        CHECK(v >= 0.0);
        sum += v;
        if (x(r, i) > x(r, arg_in)) arg_in = i;
        if (v > out(r, arg_out)) arg_out = i;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(arg_in == arg_out);
    }
  }
}

TEST_CASE("global average pool") {
  SUBCASE("constant input") {
    RealTensor x({2, 3, 4, 4}, 0.75);
    RealTensor out = ops::global_avg_pool(x);
    CHECK(out.shape == Shape{2, 3});
    for (double v : out.data) CHECK(v == 0.75);
  }

  SUBCASE("single pixel is the identity") {
    RealTensor x = random_tensor({2, 3, 1, 1}, 41);
    RealTensor out = ops::global_avg_pool(x);
    CHECK(out.data == x.data);
  }

  SUBCASE("2x2 block mean") {
    RealTensor x = RealTensor::from({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(ops::global_avg_pool(x)(0, 0) == 2.5);
  }
}

TEST_CASE("bilinear resize") {
  SUBCASE("same size passes through bitwise") {
    RealTensor x = random_tensor({1, 2, 4, 4}, 50);
    RealTensor out = ops::bilinear_resize(x, 4, 4);
    CHECK(out.data == x.data);
  }

  SUBCASE("constants stay constant") {
    RealTensor x({1, 1, 4, 4}, 2.25);
    RealTensor out = ops::bilinear_resize(x, 7, 3);
    CHECK(out.shape == Shape{1, 1, 7, 3});
    for (double v : out.data) CHECK(v == doctest::Approx(2.25).epsilon(1e-15));
  }

  SUBCASE("hand-evaluated 2x2 to 4x4 grid") {
    RealTensor x = RealTensor::from({1, 1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    RealTensor out = ops::bilinear_resize(x, 4, 4);
    const double want[4][4] = {{0.0, 0.25, 0.75, 1.0},
                               {0.5, 0.75, 1.25, 1.5},
                               {1.5, 1.75, 2.25, 2.5},
                               {2.0, 2.25, 2.75, 3.0}};
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t xx = 0; xx < 4; ++xx) {
        CHECK(out(0, 0, y, xx) == doctest::Approx(want[y][xx]).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("sigmoid gate") {
  CHECK(ops::sigmoid(0.0) == 0.5);
  CHECK(ops::sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(ops::sigmoid(40.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ops::sigmoid(-40.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ops::sigmoid(1.0) > ops::sigmoid(0.5));

  RealTensor x = RealTensor::from({3}, {0.0, 2.0, -2.0});
  RealTensor out = ops::sigmoid_gate(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out(i) == ops::sigmoid(x(i)));
}

TEST_CASE("matmul") {
  RealTensor a = RealTensor::from({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  RealTensor b = RealTensor::from({3, 2}, {7.0, 8.0, 9.0, 10.0, 11.0, 12.0});
  RealTensor out = ops::matmul(a, b);
  CHECK(out(0, 0) == 58.0);
  CHECK(out(0, 1) == 64.0);
  CHECK(out(1, 0) == 139.0);
  CHECK(out(1, 1) == 154.0);
  CHECK_THROWS_AS(ops::matmul(a, a), std::invalid_argument);
}

TEST_CASE("two layer mlp clamps the hidden layer") {
  RealTensor x = RealTensor::from({2}, {1.0, -1.0});
  RealTensor w1 = RealTensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  RealTensor w2 = RealTensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  RealTensor out = ops::two_layer_mlp(x, w1, w2);
  CHECK(out(0) == 1.0);
  CHECK(out(1) == 0.0);

  RealTensor batched = random_tensor({3, 4, 2}, 60);
  RealTensor out2 = ops::two_layer_mlp(batched, w1, w2);
  CHECK(out2.shape == Shape{3, 4, 2});
  for (std::size_t r = 0; r < 12; ++r) {
    const double a = batched.data[r * 2], b = batched.data[r * 2 + 1];
    CHECK(out2.data[r * 2] == (a > 0.0 ? a : 0.0));
    CHECK(out2.data[r * 2 + 1] == (b > 0.0 ? b : 0.0));
  }

  CHECK_THROWS_AS(ops::two_layer_mlp(x, RealTensor({3, 2}), w2), std::invalid_argument);
  CHECK_THROWS_AS(ops::two_layer_mlp(x, w1, RealTensor({3, 2})), std::invalid_argument);
}

TEST_CASE("convolutions are linear maps") {
  const double alpha = 1.75, beta = -0.5;
  RealTensor x = random_tensor({2, 4, 6, 6}, 70);
  RealTensor y = random_tensor({2, 4, 6, 6}, 71);
  RealTensor mix(x.shape);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix.data[i] = alpha * x.data[i] + beta * y.data[i];
  }

  SUBCASE("depthwise") {
    RealTensor kern = random_tensor({4, 3, 3}, 72);
    RealTensor lhs = ops::depthwise_conv2d(mix, kern);
    RealTensor fx = ops::depthwise_conv2d(x, kern);
    RealTensor fy = ops::depthwise_conv2d(y, kern);
    RealTensor rhs(lhs.shape);
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      rhs.data[i] = alpha * fx.data[i] + beta * fy.data[i];
    }
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
  }

  SUBCASE("grouped pointwise") {
    RealTensor w = random_tensor({2, 2, 2}, 73);
    RealTensor lhs = ops::grouped_pointwise_conv(mix, w);
    RealTensor fx = ops::grouped_pointwise_conv(x, w);
    RealTensor fy = ops::grouped_pointwise_conv(y, w);
    RealTensor rhs(lhs.shape);
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      rhs.data[i] = alpha * fx.data[i] + beta * fy.data[i];
    }
    CHECK(max_abs_diff(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("batched kernels are thread-count independent") {
  RealTensor x = random_tensor({4, 8, 16, 16}, 80);
  RealTensor kern = random_tensor({8, 3, 3}, 81);

  set_thread_cap(1);
  RealTensor serial = ops::depthwise_conv2d(x, kern);
  set_thread_cap(8);
  RealTensor threaded = ops::depthwise_conv2d(x, kern);
  set_thread_cap(1);
  CHECK(serial.data == threaded.data);
}
