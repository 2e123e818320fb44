#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>

#include "movietour/tape.hpp"
#include "movietour/tensor.hpp"

namespace movietour {

/// Structure of the three-layer CNN: two conv+relu+pool feature extractors
/// followed by a dense output layer.
struct ArchitectureConfig {
  std::uint32_t input_size = 64;
  std::uint32_t input_channels = 3;
  std::uint32_t conv1_filters = 256;
  std::uint32_t conv2_filters = 256;
  std::uint32_t kernel = 3;
  std::uint32_t pool = 2;
  std::uint32_t num_classes = 14;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  std::size_t padding() const { return kernel / 2; }
  std::size_t dense_inputs() const {
    const std::size_t side = input_size / (pool * pool);
    return static_cast<std::size_t>(conv2_filters) * side * side;
  }

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

inline constexpr std::array<std::string_view, 6> kParamNames = {
    "conv1_weight", "conv1_bias", "conv2_weight", "conv2_bias", "dense_weight", "dense_bias"};

template <typename T>
struct ModelParams {
  ArchitectureConfig config;
  Tensor<T> conv1_weight;
  Tensor<T> conv1_bias;
  Tensor<T> conv2_weight;
  Tensor<T> conv2_bias;
  Tensor<T> dense_weight;
  Tensor<T> dense_bias;

  /// Tensors in checkpoint order.
  std::array<Tensor<T>*, 6> tensors() {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &dense_weight, &dense_bias};
  }
  std::array<const Tensor<T>*, 6> tensors() const {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &dense_weight, &dense_bias};
  }

  std::size_t parameter_count() const;
  void zero_grad();
  /// Shapes consistent with config and all values finite; throws otherwise.
  void validate() const;

  template <typename U>
  ModelParams<U> cast() const {
    return ModelParams<U>{config,
                          conv1_weight.template cast<U>(),
                          conv1_bias.template cast<U>(),
                          conv2_weight.template cast<U>(),
                          conv2_bias.template cast<U>(),
                          dense_weight.template cast<U>(),
                          dense_bias.template cast<U>()};
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.config == b.config && a.conv1_weight == b.conv1_weight && a.conv1_bias == b.conv1_bias &&
           a.conv2_weight == b.conv2_weight && a.conv2_bias == b.conv2_bias && a.dense_weight == b.dense_weight &&
           a.dense_bias == b.dense_bias;
  }
};

/// Expected shape of each named tensor under `config`, in checkpoint order.
std::array<Shape, 6> param_shapes(const ArchitectureConfig& config);

/// Closed-form parameter count: O*C*K^2 + O per conv, F*U + U for dense.
std::size_t expected_parameter_count(const ArchitectureConfig& config);

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases. The draw order is
/// conv1_weight, conv2_weight, dense_weight from one mt19937_64 stream.
template <typename T>
ModelParams<T> build_model(const ArchitectureConfig& config, std::uint64_t seed);

/// All-zero parameters with the right shapes.
template <typename T>
ModelParams<T> zero_model(const ArchitectureConfig& config);

/// Inference: conv -> relu -> pool -> conv -> relu -> pool -> flatten -> dense.
/// Returns raw logits [N, num_classes].
template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const Tensor<T>& batch);

/// Same pipeline recorded on `tape`; parameters are registered as parameter
/// leaves so backward accumulates into their grad slots.
template <typename T>
typename Tape<T>::Var forward(ModelParams<T>& params, const Tensor<T>& batch, Tape<T>& tape);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary checkpoint: "MTCK", u32 version, seven u32 config
/// fields, then six tensor records (u32 name length, name bytes, u32 rank,
/// u32 dims, f32 payload).
void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const ModelParams<float>& params);
ModelParams<float> decode_checkpoint(std::string_view bytes);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace movietour
