#include "movietour/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "movietour/errors.hpp"

namespace movietour::ops {

namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(fmt::format("{} must have rank {}, got shape {}", what, rank, shape_str(shape)));
  }
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kernel;
  std::size_t out_h, out_w;
  std::size_t stride, padding;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (weight[2] != weight[3]) {
    throw DimensionError(fmt::format("conv2d kernel must be square: weight axes 2 and 3 are {} and {}",
                                     weight[2], weight[3]));
  }
  if (weight[1] != input[1]) {
    throw DimensionError(fmt::format("conv2d channel mismatch: input axis 1 is {}, weight axis 1 is {}",
                                     input[1], weight[1]));
  }
  ConvGeometry g{};
  g.batch = input[0];
  g.channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.filters = weight[0];
  g.kernel = weight[2];
  g.stride = stride;
  g.padding = padding;
  g.out_h = conv_output_size(g.height, g.kernel, stride, padding);
  g.out_w = conv_output_size(g.width, g.kernel, stride, padding);
  return g;
}

// col[(c,i,j)][(y,x)] = input[n, c, y*s+i-p, x*s+j-p], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, std::vector<T>& col) {
  const std::size_t cols = g.col_cols();
  col.assign(g.col_rows() * cols, T(0));
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        T* row = col.data() + ((c * g.kernel + i) * g.kernel + j) * cols;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            row[y * g.out_w + x] = plane[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const std::vector<T>& col, T* image) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const T* row = col.data() + ((c * g.kernel + i) * g.kernel + j) * cols;
        for (std::size_t y = 0; y < g.out_h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            plane[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)] += row[y * g.out_w + x];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  if (kernel == 0) throw ConfigError("conv2d kernel must be positive");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw ConfigError(fmt::format("conv2d kernel {} exceeds padded input extent {}", kernel, padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ConfigError(fmt::format("conv2d output size ({} + 2*{} - {})/{} + 1 is not integral", in, padding,
                                  kernel, stride));
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  if (bias.rank() != 1 || bias.dim(0) != g.filters) {
    throw DimensionError(fmt::format("conv2d bias shape {} does not match weight axis 0 ({})",
                                     shape_str(bias.shape()), g.filters));
  }
  Tensor<T> out({g.batch, g.filters, g.out_h, g.out_w});
  const std::size_t rows = g.col_rows();
  const std::size_t cols = g.col_cols();
  const std::size_t image_size = g.channels * g.height * g.width;
  std::vector<T> col;
  const T* w = weight.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, input.data().data() + n * image_size, col);
    T* dst = out.data().data() + n * g.filters * cols;
    for (std::size_t o = 0; o < g.filters; ++o) {
      T* out_row = dst + o * cols;
      std::fill(out_row, out_row + cols, bias[o]);
      for (std::size_t r = 0; r < rows; ++r) {
        const T wv = w[o * rows + r];
        const T* col_row = col.data() + r * cols;
        for (std::size_t q = 0; q < cols; ++q) out_row[q] += wv * col_row[q];
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  const Shape expected{g.batch, g.filters, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw DimensionError(fmt::format("conv2d upstream gradient shape {} does not match output shape {}",
                                     shape_str(grad_out.shape()), shape_str(expected)));
  }
  Conv2dGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({g.filters})};
  const std::size_t rows = g.col_rows();
  const std::size_t cols = g.col_cols();
  const std::size_t image_size = g.channels * g.height * g.width;
  std::vector<T> col;
  std::vector<T> grad_col;
  const T* w = weight.data().data();
  T* gw = grads.weight.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, input.data().data() + n * image_size, col);
    const T* go = grad_out.data().data() + n * g.filters * cols;
    grad_col.assign(rows * cols, T(0));
    for (std::size_t o = 0; o < g.filters; ++o) {
      const T* go_row = go + o * cols;
      T bias_acc = T(0);
      for (std::size_t q = 0; q < cols; ++q) bias_acc += go_row[q];
      grads.bias[o] += bias_acc;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* col_row = col.data() + r * cols;
        T acc = T(0);
        for (std::size_t q = 0; q < cols; ++q) acc += go_row[q] * col_row[q];
        gw[o * rows + r] += acc;
        const T wv = w[o * rows + r];
        T* gc_row = grad_col.data() + r * cols;
        for (std::size_t q = 0; q < cols; ++q) gc_row[q] += wv * go_row[q];
      }
    }
    col2im_add(g, grad_col, grads.input.data().data() + n * image_size);
  }
  return grads;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw DimensionError(fmt::format("relu upstream gradient shape {} does not match input shape {}",
                                     shape_str(grad_out.shape()), shape_str(input.shape())));
  }
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "maxpool2 input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError(fmt::format("maxpool2 needs even spatial axes, got axis 2 = {} and axis 3 = {}", h, w));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> res{Tensor<T>({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
  std::size_t out_idx = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++out_idx) {
        std::size_t best = base + (2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * y + dy) * w + 2 * x + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        res.output[out_idx] = input[best];
        res.argmax[out_idx] = best;
      }
    }
  }
  return res;
}

template <typename T>
Tensor<T> maxpool2_backward(const Shape& input_shape, std::span<const std::size_t> argmax, const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.numel()) {
    throw DimensionError(fmt::format("maxpool2 argmax length {} does not match upstream gradient length {}",
                                     argmax.size(), grad_out.numel()));
  }
  Tensor<T> grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "dense input");
  require_rank(weight.shape(), 2, "dense weight");
  const std::size_t n = input.dim(0), f = input.dim(1), u = weight.dim(1);
  if (weight.dim(0) != f) {
    throw DimensionError(fmt::format("dense inner dimension mismatch: input axis 1 is {}, weight axis 0 is {}", f,
                                     weight.dim(0)));
  }
  if (bias.rank() != 1 || bias.dim(0) != u) {
    throw DimensionError(fmt::format("dense bias shape {} does not match weight axis 1 ({})",
                                     shape_str(bias.shape()), u));
  }
  Tensor<T> out({n, u});
  for (std::size_t r = 0; r < n; ++r) {
    T* out_row = &out.at2(r, 0);
    for (std::size_t k = 0; k < u; ++k) out_row[k] = bias[k];
    for (std::size_t k = 0; k < f; ++k) {
      const T x = input.at2(r, k);
      const T* w_row = &weight.at2(k, 0);
      for (std::size_t j = 0; j < u; ++j) out_row[j] += x * w_row[j];
    }
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  require_rank(input.shape(), 2, "dense input");
  const std::size_t n = input.dim(0), f = input.dim(1), u = weight.dim(1);
  if (grad_out.shape() != Shape{n, u}) {
    throw DimensionError(fmt::format("dense upstream gradient shape {} does not match output [{},{}]",
                                     shape_str(grad_out.shape()), n, u));
  }
  DenseGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({u})};
  for (std::size_t r = 0; r < n; ++r) {
    const T* go_row = &grad_out.at2(r, 0);
    for (std::size_t j = 0; j < u; ++j) grads.bias[j] += go_row[j];
    for (std::size_t k = 0; k < f; ++k) {
      const T x = input.at2(r, k);
      T* gw_row = &grads.weight.at2(k, 0);
      const T* w_row = &weight.at2(k, 0);
      T acc = T(0);
      for (std::size_t j = 0; j < u; ++j) {
        gw_row[j] += x * go_row[j];
        acc += go_row[j] * w_row[j];
      }
      grads.input.at2(r, k) = acc;
    }
  }
  return grads;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> probs(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    T mx = logits.at2(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at2(r, j));
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      const T e = std::exp(logits.at2(r, j) - mx);
      probs.at2(r, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) probs.at2(r, j) /= sum;
  }
  return probs;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows) {
    throw DimensionError(fmt::format("softmax_xent got {} labels for {} logit rows", labels.size(), rows));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw LabelError(r, fmt::format("label {} at row {} is outside [0, {})", labels[r], r, classes));
    }
  }
}

}  // namespace

template <typename T>
SoftmaxXentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_xent logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  check_labels(labels, n, k);
  SoftmaxXentResult<T> res{T(0), Tensor<T>(logits.shape())};
  for (std::size_t r = 0; r < n; ++r) {
    T mx = logits.at2(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits.at2(r, j));
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      const T e = std::exp(logits.at2(r, j) - mx);
      res.probs.at2(r, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) res.probs.at2(r, j) /= sum;
    const T log_prob = logits.at2(r, static_cast<std::size_t>(labels[r])) - mx - std::log(sum);
    res.loss -= log_prob;
  }
  res.loss /= static_cast<T>(n);
  return res;
}

template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probs, std::span<const int> labels, T seed) {
  require_rank(probs.shape(), 2, "softmax_xent probs");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  check_labels(labels, n, k);
  Tensor<T> grad(probs.shape());
  const T scale = seed / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const T onehot = static_cast<std::size_t>(labels[r]) == j ? T(1) : T(0);
      grad.at2(r, j) = (probs.at2(r, j) - onehot) * scale;
    }
  }
  return grad;
}

#define MOVIETOUR_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                                          std::size_t);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                               \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template PoolResult<T> maxpool2(const Tensor<T>&);                                                       \
  template Tensor<T> maxpool2_backward(const Shape&, std::span<const std::size_t>, const Tensor<T>&);      \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> softmax(const Tensor<T>&);                                                            \
  template SoftmaxXentResult<T> softmax_xent(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> softmax_xent_backward(const Tensor<T>&, std::span<const int>, T);

MOVIETOUR_INSTANTIATE_OPS(float)
MOVIETOUR_INSTANTIATE_OPS(double)

#undef MOVIETOUR_INSTANTIATE_OPS

}  // namespace movietour::ops
