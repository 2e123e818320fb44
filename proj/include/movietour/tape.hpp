#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "movietour/tensor.hpp"

namespace movietour {

/// Records layer-level operations during a forward pass and replays them in
/// reverse to produce gradients.
///
/// Values live on the tape and are addressed by `Var` handles. Leaves come in
/// three kinds:
///   - constants (`input`): no gradient is kept;
///   - variables (`variable`): owned by the tape, gradient readable via `grad`;
///   - parameters (`parameter`): external tensors; backward accumulates into
///     their own grad slot, so a model's weights receive gradients in place.
///
/// Gradients of intermediate values are released as soon as the op that
/// produced them has been processed.
template <typename T>
class Tape {
 public:
  struct Var {
    std::size_t id;
  };

  struct XentVars {
    Var loss;   // scalar, shape [1]
    Var probs;  // softmax output, not differentiable
  };

  Var input(Tensor<T> value);
  Var variable(Tensor<T> value);
  Var parameter(Tensor<T>& param);

  Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);
  Var relu(Var input);
  Var maxpool2(Var input);
  /// [N, ...] -> [N, prod(...)].
  Var flatten(Var input);
  Var dense(Var input, Var weight, Var bias);
  XentVars softmax_xent(Var logits, std::span<const int> labels);

  const Tensor<T>& value(Var v) const;
  /// Gradient of a variable leaf after backward.
  std::span<const T> grad(Var v) const;

  /// Seeds d(loss)/d(loss) = seed and propagates to every leaf.
  void backward(Var loss, T seed = T(1));

  std::size_t num_records() const noexcept { return records_.size(); }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  void clear();

 private:
  enum class LeafKind { kNone, kConstant, kVariable, kParameter };
  enum class OpKind { kConv2d, kRelu, kMaxpool2, kFlatten, kDense, kSoftmaxXent };

  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    LeafKind leaf = LeafKind::kNone;
    const Tensor<T>& get() const { return external ? *external : owned; }
  };

  struct Record {
    OpKind kind = OpKind::kRelu;
    std::vector<std::size_t> inputs;
    std::size_t output = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<std::size_t> argmax;
    std::vector<int> labels;
    std::size_t probs_node = 0;
  };

  static Record make_record(OpKind kind, std::vector<std::size_t> inputs, std::size_t output);
  Var push(Tensor<T> value, LeafKind leaf);
  void check(Var v) const;
  void accumulate(std::vector<std::optional<Tensor<T>>>& grads, std::size_t node, Tensor<T>&& g);

  std::deque<Node> nodes_;
  std::vector<Record> records_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace movietour
