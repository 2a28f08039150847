#pragma once

#include <cstddef>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim::nn {

enum class LayerKind { Conv2D, MaxPool2D, Dense, Dropout, ReLU, Flatten };

/// One layer of the trunk. Only the fields for the given kind are meaningful.
struct LayerSpec {
  LayerKind kind;
  std::size_t filters = 0;   // Conv2D: number of output channels
  std::size_t kernel = 3;    // Conv2D: spatial kernel size
  std::size_t units = 0;     // Dense: output width
  double dropout_p = 0.0;    // Dropout: drop probability, 0 <= p < 1

  static LayerSpec conv2d(std::size_t filters, std::size_t kernel = 3) {
    return {LayerKind::Conv2D, filters, kernel, 0, 0.0};
  }
  static LayerSpec maxpool2d() { return {LayerKind::MaxPool2D, 0, 0, 0, 0.0}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, 0, 0, units, 0.0}; }
  static LayerSpec dropout(double p) { return {LayerKind::Dropout, 0, 0, 0, p}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0, 0, 0.0}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 0, 0.0}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Channels-height-width extent of an activation between layers.
struct Dims {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t flat() const { return c * h * w; }
  bool operator==(const Dims&) const = default;
};

// ---- layer primitives ------------------------------------------------------
// Cross-correlation ("conv" in CNN usage), valid padding, stride 1.
// input: C x H x W, kernels: F x C x K x K, bias: F  ->  F x (H-K+1) x (W-K+1)
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);
void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_kernels, Tensor& grad_bias);

/// 2x2 window, stride 2; a trailing odd row/column is truncated. argmax holds,
/// per output cell, the flat index of the first (row-major) maximal input.
struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;
};
PoolResult maxpool2d(const Tensor& input);
Tensor maxpool2d_backward(const Tensor& input, const PoolResult& fwd, const Tensor& grad_out);

// y = W x + b with W row-major units x inputs.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                    Tensor& grad_input, Tensor& grad_weights, Tensor& grad_bias);

Tensor relu(const Tensor& input);
/// grad routed through strictly positive outputs only.
Tensor relu_backward(const Tensor& output, const Tensor& grad_out);

/// Inverted dropout: mask entries are 0 or 1/(1-p), drawn once in the forward
/// pass and reused by the backward pass.
Tensor dropout_apply(const Tensor& input, const std::vector<double>& mask);

Dims infer_output_dims(const LayerSpec& spec, const Dims& in);

}  // namespace fedsim::nn
