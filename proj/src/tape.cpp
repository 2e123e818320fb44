#include "movietour/tape.hpp"

#include <fmt/format.h>

#include "movietour/errors.hpp"
#include "movietour/ops.hpp"

namespace movietour {

template <typename T>
typename Tape<T>::Var Tape<T>::push(Tensor<T> value, LeafKind leaf) {
  Node node;
  node.owned = std::move(value);
  node.leaf = leaf;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Tape<T>::Record Tape<T>::make_record(OpKind kind, std::vector<std::size_t> inputs, std::size_t output) {
  Record rec;
  rec.kind = kind;
  rec.inputs = std::move(inputs);
  rec.output = output;
  return rec;
}

template <typename T>
void Tape<T>::check(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError(fmt::format("tape handle {} does not exist", v.id));
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(Tensor<T> value) {
  return push(std::move(value), LeafKind::kConstant);
}

template <typename T>
typename Tape<T>::Var Tape<T>::variable(Tensor<T> value) {
  return push(std::move(value), LeafKind::kVariable);
}

template <typename T>
typename Tape<T>::Var Tape<T>::parameter(Tensor<T>& param) {
  Node node;
  node.external = &param;
  node.leaf = LeafKind::kParameter;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  check(v);
  return nodes_[v.id].get();
}

template <typename T>
std::span<const T> Tape<T>::grad(Var v) const {
  check(v);
  const Node& node = nodes_[v.id];
  if (node.leaf != LeafKind::kVariable && node.leaf != LeafKind::kParameter) {
    throw UsageError("gradients are only retained for variable and parameter leaves");
  }
  return node.get().grad();
}

template <typename T>
typename Tape<T>::Var Tape<T>::conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  check(input);
  check(weight);
  check(bias);
  Tensor<T> out = ops::conv2d(value(input), value(weight), value(bias), stride, padding);
  Var v = push(std::move(out), LeafKind::kNone);
  Record rec = make_record(OpKind::kConv2d, {input.id, weight.id, bias.id}, v.id);
  rec.stride = stride;
  rec.padding = padding;
  records_.push_back(std::move(rec));
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::relu(Var input) {
  check(input);
  Var v = push(ops::relu(value(input)), LeafKind::kNone);
  records_.push_back(make_record(OpKind::kRelu, {input.id}, v.id));
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::maxpool2(Var input) {
  check(input);
  ops::PoolResult<T> res = ops::maxpool2(value(input));
  Var v = push(std::move(res.output), LeafKind::kNone);
  Record rec = make_record(OpKind::kMaxpool2, {input.id}, v.id);
  rec.argmax = std::move(res.argmax);
  records_.push_back(std::move(rec));
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::flatten(Var input) {
  check(input);
  const Tensor<T>& x = value(input);
  const std::size_t rows = x.dim(0);
  Var v = push(x.reshaped({rows, x.numel() / rows}), LeafKind::kNone);
  records_.push_back(make_record(OpKind::kFlatten, {input.id}, v.id));
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::dense(Var input, Var weight, Var bias) {
  check(input);
  check(weight);
  check(bias);
  Var v = push(ops::dense(value(input), value(weight), value(bias)), LeafKind::kNone);
  records_.push_back(make_record(OpKind::kDense, {input.id, weight.id, bias.id}, v.id));
  return v;
}

template <typename T>
typename Tape<T>::XentVars Tape<T>::softmax_xent(Var logits, std::span<const int> labels) {
  check(logits);
  ops::SoftmaxXentResult<T> res = ops::softmax_xent(value(logits), labels);
  Var probs = push(std::move(res.probs), LeafKind::kConstant);
  Var loss = push(Tensor<T>({1}, res.loss), LeafKind::kNone);
  Record rec = make_record(OpKind::kSoftmaxXent, {logits.id}, loss.id);
  rec.labels.assign(labels.begin(), labels.end());
  rec.probs_node = probs.id;
  records_.push_back(std::move(rec));
  return {loss, probs};
}

template <typename T>
void Tape<T>::accumulate(std::vector<std::optional<Tensor<T>>>& grads, std::size_t node_id, Tensor<T>&& g) {
  Node& node = nodes_[node_id];
  switch (node.leaf) {
    case LeafKind::kConstant:
      return;
    case LeafKind::kVariable:
    case LeafKind::kParameter: {
      Tensor<T>& target = node.external ? *node.external : node.owned;
      std::span<T> dst = target.grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
      return;
    }
    case LeafKind::kNone:
      break;
  }
  auto& slot = grads[node_id];
  if (!slot) {
    slot = std::move(g);
  } else {
    for (std::size_t i = 0; i < slot->numel(); ++i) (*slot)[i] += g[i];
  }
}

template <typename T>
void Tape<T>::backward(Var loss, T seed) {
  if (records_.empty()) throw UsageError("backward called on an empty tape");
  check(loss);
  if (nodes_[loss.id].leaf != LeafKind::kNone) throw UsageError("backward target was not produced by the tape");
  if (nodes_[loss.id].get().numel() != 1) {
    throw UsageError(fmt::format("backward target must be a scalar, got shape {}",
                                 shape_str(nodes_[loss.id].get().shape())));
  }

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  grads[loss.id] = Tensor<T>(nodes_[loss.id].get().shape(), seed);

  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const Record& rec = *it;
    if (!grads[rec.output]) continue;
    Tensor<T> upstream = std::move(*grads[rec.output]);
    grads[rec.output].reset();

    switch (rec.kind) {
      case OpKind::kConv2d: {
        auto g = ops::conv2d_backward(value(Var{rec.inputs[0]}), value(Var{rec.inputs[1]}), upstream, rec.stride,
                                      rec.padding);
        accumulate(grads, rec.inputs[0], std::move(g.input));
        accumulate(grads, rec.inputs[1], std::move(g.weight));
        accumulate(grads, rec.inputs[2], std::move(g.bias));
        break;
      }
      case OpKind::kRelu:
        accumulate(grads, rec.inputs[0], ops::relu_backward(value(Var{rec.inputs[0]}), upstream));
        break;
      case OpKind::kMaxpool2:
        accumulate(grads, rec.inputs[0],
                   ops::maxpool2_backward(value(Var{rec.inputs[0]}).shape(), rec.argmax, upstream));
        break;
      case OpKind::kFlatten:
        accumulate(grads, rec.inputs[0], std::move(upstream).reshaped(value(Var{rec.inputs[0]}).shape()));
        break;
      case OpKind::kDense: {
        auto g = ops::dense_backward(value(Var{rec.inputs[0]}), value(Var{rec.inputs[1]}), upstream);
        accumulate(grads, rec.inputs[0], std::move(g.input));
        accumulate(grads, rec.inputs[1], std::move(g.weight));
        accumulate(grads, rec.inputs[2], std::move(g.bias));
        break;
      }
      case OpKind::kSoftmaxXent:
        accumulate(grads, rec.inputs[0],
                   ops::softmax_xent_backward(nodes_[rec.probs_node].get(), rec.labels, upstream[0]));
        break;
    }
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
  records_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace movietour
