#pragma once

// Forward and backward kernels for the layer operations used by the CNN.
// Every function here is pure: outputs depend only on the arguments, and the
// accumulation order inside each output element is fixed by the loop order.

#include <cstddef>
#include <span>
#include <vector>

#include "movietour/tensor.hpp"

namespace movietour::ops {

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input index of the winning cell for each output cell.
  std::vector<std::size_t> argmax;
};

template <typename T>
struct SoftmaxXentResult {
  T loss;
  Tensor<T> probs;
};

/// Output spatial size of a convolution; throws ConfigError when the geometry
/// does not produce a positive integral size.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// input [N,C,H,W], weight [O,C,K,K], bias [O] -> [N,O,H',W'], zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               std::size_t stride, std::size_t padding);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Gradient passes where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

/// 2x2 stride-2 max pooling. Ties go to the first maximum in row-major window order.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                            const Tensor<T>& grad_out);

/// input [N,F] x weight [F,U] + bias [U].
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean negative log-likelihood over the batch plus the softmax probabilities.
template <typename T>
SoftmaxXentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels);

/// d(loss)/d(logits) scaled by `seed`: seed * (probs - onehot) / N.
template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probs, std::span<const int> labels, T seed);

}  // namespace movietour::ops
