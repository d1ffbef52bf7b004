#pragma once

#include "favs/tensor.hpp"

namespace favs::ops {

/// Per-channel 2D convolution with zero same-padding.
/// x: [T,C,H,W], kernels: [C,kh,kw] with odd kh,kw.
RealTensor depthwise_conv2d(const RealTensor& x, const RealTensor& kernels);

/// Grouped 1x1 convolution: channels split into G groups, each mixed by its
/// own (C/G)x(C/G) matrix at every spatial site.
/// x: [T,C,H,W], weights: [G,C/G,C/G].
RealTensor grouped_pointwise_conv(const RealTensor& x, const RealTensor& weights);

/// Depthwise 3D convolution over (T,H,W) plus the identity skip: out = conv(x) + x.
/// The real kernel is applied to real and imaginary planes independently.
/// x: [T,C,H,W] complex, kernel: [C,kt,kh,kw] with odd extents.
ComplexTensor conv3d_residual(const ComplexTensor& x, const RealTensor& kernel);

/// Softmax over the last axis, computed with max-subtraction.
RealTensor softmax(const RealTensor& x);

/// Mean over the spatial axes: [T,C,H,W] -> [T,C]. Row-major summation order.
RealTensor global_avg_pool(const RealTensor& x);

/// Bilinear interpolation (align-corners false, half-pixel centers) over the
/// last two axes of a [T,C,H,W] tensor. Identical sizes pass through bitwise.
RealTensor bilinear_resize(const RealTensor& x, std::size_t out_h, std::size_t out_w);

/// Element-wise logistic function.
RealTensor sigmoid_gate(const RealTensor& x);

double sigmoid(double v);

/// Plain matrix product: a [N,K] times b [K,M] -> [N,M].
RealTensor matmul(const RealTensor& a, const RealTensor& b);

/// Row-vector two-layer perceptron over the last axis with ReLU hidden
/// activation: y = relu(x * w1) * w2. w1: [in,hidden], w2: [hidden,out].
RealTensor two_layer_mlp(const RealTensor& x, const RealTensor& w1, const RealTensor& w2);

}  // namespace favs::ops
