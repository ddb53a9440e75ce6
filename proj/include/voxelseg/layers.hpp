#pragma once

#include "voxelseg/tensor.hpp"

namespace voxelseg::nn {

enum class Mode { Train, Infer };

// All ops take an optional tape; with nullptr (or no input requiring
// gradients) nothing is recorded and the op is a plain forward evaluation.

/// Cross-correlation of x[b,x,y,z,ci] with w[k,k,k,ci,co] plus bias[co],
/// zero "same" padding of (k-1)/2 on each side. k must be odd.
template <typename T>
TensorPtr<T> conv3d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias,
                    std::size_t stride = 1);

/// Stride-2, 2x2x2 transposed convolution: x[b,x,y,z,ci], w[2,2,2,co,ci],
/// bias[co] (may be null) -> [b,2x,2y,2z,co].
template <typename T>
TensorPtr<T> transposed_conv3d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                               const TensorPtr<T>& bias);

/// 2x2x2 max pooling, stride 2. Ties route the gradient to the first element
/// of the window in (x, y, z) row-major order.
template <typename T>
TensorPtr<T> maxpool3d(Tape<T>* tape, const TensorPtr<T>& x);

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel batch normalisation over (batch, x, y, z). Train mode uses
/// batch statistics and updates running_mean / running_var in place
/// (running variance uses the unbiased estimate); infer mode reads them.
template <typename T>
TensorPtr<T> batchnorm(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, BatchNormOptions opts = {});

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x);

template <typename T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// Softmax over the last (channel) axis, stabilised by max subtraction.
template <typename T>
TensorPtr<T> softmax_channels(Tape<T>* tape, const TensorPtr<T>& x);

/// Elementwise sum of two equally shaped tensors.
template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// sum_i weights[i] * x[i] as a one-element tensor; weights are constants.
template <typename T>
TensorPtr<T> weighted_sum(Tape<T>* tape, const TensorPtr<T>& x, std::span<const T> weights);

}  // namespace voxelseg::nn
