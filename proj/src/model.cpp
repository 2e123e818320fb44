#include "movietour/model.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "movietour/errors.hpp"
#include "movietour/ops.hpp"

namespace movietour {

void ArchitectureConfig::validate() const {
  if (input_channels < 1) throw ConfigError("input_channels must be at least 1");
  if (conv1_filters < 1 || conv2_filters < 1) throw ConfigError("filter counts must be at least 1");
  if (num_classes < 2) throw ConfigError(fmt::format("num_classes must be at least 2, got {}", num_classes));
  if (pool != 2) throw ConfigError(fmt::format("pool must be 2, got {}", pool));
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(fmt::format("kernel must be a positive odd size, got {}", kernel));
  }
  if (input_size == 0 || input_size % (pool * pool) != 0) {
    throw ConfigError(fmt::format("input_size {} must be a positive multiple of {}", input_size, pool * pool));
  }
}

std::array<Shape, 6> param_shapes(const ArchitectureConfig& c) {
  return {Shape{c.conv1_filters, c.input_channels, c.kernel, c.kernel},
          Shape{c.conv1_filters},
          Shape{c.conv2_filters, c.conv1_filters, c.kernel, c.kernel},
          Shape{c.conv2_filters},
          Shape{c.dense_inputs(), c.num_classes},
          Shape{c.num_classes}};
}

std::size_t expected_parameter_count(const ArchitectureConfig& c) {
  const std::size_t k2 = std::size_t{c.kernel} * c.kernel;
  const std::size_t conv1 = std::size_t{c.conv1_filters} * c.input_channels * k2 + c.conv1_filters;
  const std::size_t conv2 = std::size_t{c.conv2_filters} * c.conv1_filters * k2 + c.conv2_filters;
  const std::size_t dense = c.dense_inputs() * c.num_classes + c.num_classes;
  return conv1 + conv2 + dense;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor<T>* t : tensors()) total += t->numel();
  return total;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (Tensor<T>* t : tensors()) t->zero_grad();
}

template <typename T>
void ModelParams<T>::validate() const {
  config.validate();
  const auto shapes = param_shapes(config);
  const auto ts = tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i]->shape() != shapes[i]) {
      throw ConsistencyError(fmt::format("{} has shape {} but the config implies {}", kParamNames[i],
                                         shape_str(ts[i]->shape()), shape_str(shapes[i])));
    }
    if (!ts[i]->all_finite()) throw NumericError(fmt::format("{} contains non-finite values", kParamNames[i]));
  }
}

template <typename T>
ModelParams<T> zero_model(const ArchitectureConfig& config) {
  config.validate();
  const auto shapes = param_shapes(config);
  return ModelParams<T>{config,           Tensor<T>(shapes[0]), Tensor<T>(shapes[1]), Tensor<T>(shapes[2]),
                        Tensor<T>(shapes[3]), Tensor<T>(shapes[4]), Tensor<T>(shapes[5])};
}

template <typename T>
ModelParams<T> build_model(const ArchitectureConfig& config, std::uint64_t seed) {
  ModelParams<T> params = zero_model<T>(config);
  std::mt19937_64 rng(seed);
  auto he_fill = [&rng](Tensor<T>& w, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : w.data()) v = static_cast<T>(dist(rng));
  };
  const std::size_t k2 = std::size_t{config.kernel} * config.kernel;
  he_fill(params.conv1_weight, config.input_channels * k2);
  he_fill(params.conv2_weight, config.conv1_filters * k2);
  he_fill(params.dense_weight, config.dense_inputs());
  return params;
}

namespace {

void check_batch(const ArchitectureConfig& config, const Shape& shape) {
  const Shape want{0, config.input_channels, config.input_size, config.input_size};
  if (shape.size() != 4 || shape[1] != want[1] || shape[2] != want[2] || shape[3] != want[3]) {
    throw DimensionError(fmt::format("model expects a batch of shape [N,{},{},{}], got {}", want[1], want[2],
                                     want[3], shape_str(shape)));
  }
}

}  // namespace

template <typename T>
Tensor<T> forward(const ModelParams<T>& p, const Tensor<T>& batch) {
  check_batch(p.config, batch.shape());
  const std::size_t pad = p.config.padding();
  Tensor<T> x = ops::relu(ops::conv2d(batch, p.conv1_weight, p.conv1_bias, 1, pad));
  x = ops::maxpool2(x).output;
  x = ops::relu(ops::conv2d(x, p.conv2_weight, p.conv2_bias, 1, pad));
  x = ops::maxpool2(x).output;
  const std::size_t n = x.dim(0);
  const std::size_t features = x.numel() / n;
  return ops::dense(std::move(x).reshaped({n, features}), p.dense_weight, p.dense_bias);
}

template <typename T>
typename Tape<T>::Var forward(ModelParams<T>& p, const Tensor<T>& batch, Tape<T>& tape) {
  check_batch(p.config, batch.shape());
  const std::size_t pad = p.config.padding();
  auto x = tape.input(batch);
  x = tape.conv2d(x, tape.parameter(p.conv1_weight), tape.parameter(p.conv1_bias), 1, pad);
  x = tape.maxpool2(tape.relu(x));
  x = tape.conv2d(x, tape.parameter(p.conv2_weight), tape.parameter(p.conv2_bias), 1, pad);
  x = tape.maxpool2(tape.relu(x));
  x = tape.flatten(x);
  return tape.dense(x, tape.parameter(p.dense_weight), tape.parameter(p.dense_bias));
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> zero_model(const ArchitectureConfig&);
template ModelParams<double> zero_model(const ArchitectureConfig&);
template ModelParams<float> build_model(const ArchitectureConfig&, std::uint64_t);
template ModelParams<double> build_model(const ArchitectureConfig&, std::uint64_t);
template Tensor<float> forward(const ModelParams<float>&, const Tensor<float>&);
template Tensor<double> forward(const ModelParams<double>&, const Tensor<double>&);
template Tape<float>::Var forward(ModelParams<float>&, const Tensor<float>&, Tape<float>&);
template Tape<double>::Var forward(ModelParams<double>&, const Tensor<double>&, Tape<double>&);

}  // namespace movietour
