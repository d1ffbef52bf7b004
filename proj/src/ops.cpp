#include "favs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "favs/parallel.hpp"

namespace favs::ops {

namespace {

void require_rank4(const RealTensor& x, const char* what) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(what) + " expects a rank-4 tensor, got shape " +
                                shape_str(x.shape));
  }
}

void require_odd(std::size_t k, const char* what) {
  if (k % 2 == 0) {
    throw std::invalid_argument(std::string(what) + " requires odd kernel extents, got " +
                                std::to_string(k));
  }
}

}  // namespace

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

RealTensor depthwise_conv2d(const RealTensor& x, const RealTensor& kernels) {
  require_rank4(x, "depthwise_conv2d");
  if (kernels.rank() != 3) {
    throw std::invalid_argument("depthwise_conv2d kernels must be [C,kh,kw], got shape " +
                                shape_str(kernels.shape));
  }
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (kernels.shape[0] != C) {
    throw std::invalid_argument("depthwise_conv2d channel mismatch: input " +
                                shape_str(x.shape) + " vs kernels " + shape_str(kernels.shape));
  }
  const std::size_t kh = kernels.shape[1], kw = kernels.shape[2];
  require_odd(kh, "depthwise_conv2d");
  require_odd(kw, "depthwise_conv2d");
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);

  RealTensor out(x.shape);
  parallel_for(T * C, [&](std::size_t begin, std::size_t end) {
    for (std::size_t tc = begin; tc < end; ++tc) {
      const std::size_t t = tc / C, c = tc % C;
      const double* in = &x.data[(t * C + c) * H * W];
      const double* k = &kernels.data[c * kh * kw];
      double* dst = &out.data[(t * C + c) * H * W];
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) {
          double acc = 0.0;
          for (std::size_t i = 0; i < kh; ++i) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t j = 0; j < kw; ++j) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - pw;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += k[i * kw + j] * in[static_cast<std::size_t>(sy) * W +
                                        static_cast<std::size_t>(sx)];
            }
          }
          dst[y * W + xx] = acc;
        }
      }
    }
  });
  return out;
}

RealTensor grouped_pointwise_conv(const RealTensor& x, const RealTensor& weights) {
  require_rank4(x, "grouped_pointwise_conv");
  if (weights.rank() != 3 || weights.shape[1] != weights.shape[2]) {
    throw std::invalid_argument("grouped_pointwise_conv weights must be [G,C/G,C/G], got shape " +
                                shape_str(weights.shape));
  }
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t G = weights.shape[0], cg = weights.shape[1];
  if (G * cg != C) {
    throw std::invalid_argument("grouped_pointwise_conv: channels " + std::to_string(C) +
                                " not divisible into " + std::to_string(G) + " groups of " +
                                std::to_string(cg));
  }
  RealTensor out(x.shape);
  const std::size_t hw = H * W;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t g = 0; g < G; ++g) {
      const double* wg = &weights.data[g * cg * cg];
      for (std::size_t co = 0; co < cg; ++co) {
        double* dst = &out.data[((t * C) + g * cg + co) * hw];
        for (std::size_t p = 0; p < hw; ++p) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cg; ++ci) {
            acc += wg[co * cg + ci] * x.data[((t * C) + g * cg + ci) * hw + p];
          }
          dst[p] = acc;
        }
      }
    }
  }
  return out;
}

ComplexTensor conv3d_residual(const ComplexTensor& x, const RealTensor& kernel) {
  if (x.rank() != 4) {
    throw std::invalid_argument("conv3d_residual expects a rank-4 tensor, got shape " +
                                shape_str(x.shape));
  }
  if (kernel.rank() != 4) {
    throw std::invalid_argument("conv3d_residual kernel must be [C,kt,kh,kw], got shape " +
                                shape_str(kernel.shape));
  }
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (kernel.shape[0] != C) {
    throw std::invalid_argument("conv3d_residual channel mismatch: input " + shape_str(x.shape) +
                                " vs kernel " + shape_str(kernel.shape));
  }
  const std::size_t kt = kernel.shape[1], kh = kernel.shape[2], kw = kernel.shape[3];
  require_odd(kt, "conv3d_residual");
  require_odd(kh, "conv3d_residual");
  require_odd(kw, "conv3d_residual");
  const std::ptrdiff_t pt = static_cast<std::ptrdiff_t>(kt / 2);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);

  ComplexTensor out(x.shape);
  const std::size_t hw = H * W;
  parallel_for(C, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const double* k = &kernel.data[c * kt * kh * kw];
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t xx = 0; xx < W; ++xx) {
            std::complex<double> acc{0.0, 0.0};
            for (std::size_t dt = 0; dt < kt; ++dt) {
              const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(t + dt) - pt;
              if (st < 0 || st >= static_cast<std::ptrdiff_t>(T)) continue;
              for (std::size_t i = 0; i < kh; ++i) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t j = 0; j < kw; ++j) {
                  const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - pw;
                  if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                  acc += k[(dt * kh + i) * kw + j] *
                         x.data[(static_cast<std::size_t>(st) * C + c) * hw +
                                static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)];
                }
              }
            }
            out.data[(t * C + c) * hw + y * W + xx] = acc + x.data[(t * C + c) * hw + y * W + xx];
          }
        }
      }
    }
  });
  return out;
}

RealTensor softmax(const RealTensor& x) {
  const std::size_t n = x.shape.back();
  const std::size_t rows = x.size() / n;
  RealTensor out(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &x.data[r * n];
    double* dst = &out.data[r * n];
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = std::exp(in[i] - mx);
      sum += dst[i];
    }
    for (std::size_t i = 0; i < n; ++i) dst[i] /= sum;
  }
  return out;
}

RealTensor global_avg_pool(const RealTensor& x) {
  require_rank4(x, "global_avg_pool");
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (H * W == 0) {
    throw std::invalid_argument("global_avg_pool: empty spatial extent in shape " +
                                shape_str(x.shape));
  }
  RealTensor out({T, C});
  const std::size_t hw = H * W;
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    double acc = 0.0;
    const double* in = &x.data[tc * hw];
    for (std::size_t p = 0; p < hw; ++p) acc += in[p];
    out.data[tc] = acc / static_cast<double>(hw);
  }
  return out;
}

RealTensor bilinear_resize(const RealTensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank4(x, "bilinear_resize");
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resize: output extents must be >= 1");
  }
  const std::size_t T = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (out_h == H && out_w == W) return x;

  RealTensor out({T, C, out_h, out_w});
  const double sy_scale = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx_scale = static_cast<double>(W) / static_cast<double>(out_w);
  const std::size_t hw = H * W;
  for (std::size_t tc = 0; tc < T * C; ++tc) {
    const double* in = &x.data[tc * hw];
    double* dst = &out.data[tc * out_h * out_w];
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double sy = (static_cast<double>(oy) + 0.5) * sy_scale - 0.5;
      const double fy = std::floor(sy);
      const double wy = sy - fy;
      const std::size_t y0 = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fy), 0,
                                     static_cast<std::ptrdiff_t>(H) - 1));
      const std::size_t y1 = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fy) + 1, 0,
                                     static_cast<std::ptrdiff_t>(H) - 1));
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double sx = (static_cast<double>(ox) + 0.5) * sx_scale - 0.5;
        const double fx = std::floor(sx);
        const double wx = sx - fx;
        const std::size_t x0 = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fx), 0,
                                       static_cast<std::ptrdiff_t>(W) - 1));
        const std::size_t x1 = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(fx) + 1, 0,
                                       static_cast<std::ptrdiff_t>(W) - 1));
        const double top = (1.0 - wx) * in[y0 * W + x0] + wx * in[y0 * W + x1];
        const double bot = (1.0 - wx) * in[y1 * W + x0] + wx * in[y1 * W + x1];
        dst[oy * out_w + ox] = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

RealTensor sigmoid_gate(const RealTensor& x) {
  RealTensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = sigmoid(x.data[i]);
  return out;
}

RealTensor matmul(const RealTensor& a, const RealTensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2) {
    throw std::invalid_argument("matmul: expected rank-2 operands, got " +
                                shape_str(a.shape) + " and " + shape_str(b.shape));
  }
  const std::size_t N = a.shape[0], K = a.shape[1], M = b.shape[1];
  if (b.shape[0] != K) {
    throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  }
  RealTensor out({N, M});
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = &a.data[n * K];
    double* dst = &out.data[n * M];
    for (std::size_t k = 0; k < K; ++k) {
      const double av = row[k];
      const double* brow = &b.data[k * M];
      for (std::size_t m = 0; m < M; ++m) dst[m] += av * brow[m];
    }
  }
  return out;
}

RealTensor two_layer_mlp(const RealTensor& x, const RealTensor& w1, const RealTensor& w2) {
  if (x.shape.empty()) throw std::invalid_argument("two_layer_mlp: scalar input");
  if (w1.shape.size() != 2 || w2.shape.size() != 2) {
    throw std::invalid_argument("two_layer_mlp: weights must be rank 2, got " +
                                shape_str(w1.shape) + " and " + shape_str(w2.shape));
  }
  const std::size_t in = w1.shape[0], hidden = w1.shape[1], out_dim = w2.shape[1];
  if (x.shape.back() != in) {
    throw std::invalid_argument("two_layer_mlp: input " + shape_str(x.shape) +
                                " does not end in " + std::to_string(in));
  }
  if (w2.shape[0] != hidden) {
    throw std::invalid_argument("two_layer_mlp: hidden extents differ, " +
                                shape_str(w1.shape) + " vs " + shape_str(w2.shape));
  }
  Shape out_shape = x.shape;
  out_shape.back() = out_dim;
  RealTensor out(out_shape);
  const std::size_t rows = x.size() / in;
  std::vector<double> h(hidden);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = &x.data[r * in];
    for (std::size_t j = 0; j < hidden; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += src[i] * w1.data[i * hidden + j];
      h[j] = acc > 0.0 ? acc : 0.0;
    }
    double* dst = &out.data[r * out_dim];
    for (std::size_t j = 0; j < out_dim; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < hidden; ++k) acc += h[k] * w2.data[k * out_dim + j];
      dst[j] = acc;
    }
  }
  return out;
}

}  // namespace favs::ops
