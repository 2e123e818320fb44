#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "movietour/corpus.hpp"
#include "movietour/model.hpp"

namespace movietour {

struct TrainConfig {
  int epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::optional<std::uint64_t> seed;  // required
  std::uint32_t input_size = 64;
  std::filesystem::path checkpoint_out = "best.mtck";
  std::string select_on = "val_accuracy";

  // Architecture overrides; the class count always comes from the corpus.
  std::uint32_t conv1_filters = 256;
  std::uint32_t conv2_filters = 256;
  std::uint32_t kernel = 3;
  /// Weight-init seed; defaults to `seed`.
  std::optional<std::uint64_t> init_seed;
  std::optional<std::filesystem::path> history_out;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  ArchitectureConfig architecture(std::uint32_t num_classes) const;
  std::uint64_t effective_init_seed() const { return init_seed.value_or(seed.value_or(0)); }
};

/// Flat `key = value` lines; `#` starts a comment. Unknown or repeated keys
/// and unparsable values raise ConfigError naming the key.
TrainConfig parse_train_config(std::string_view text);
TrainConfig read_train_config(const std::filesystem::path& path);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct EvalMetrics {
  double loss = 0;
  double accuracy = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  ConfusionMatrix confusion;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  ConfusionMatrix val_confusion;
  bool checkpoint_saved = false;
};

std::string epoch_metrics_json(const EpochMetrics& m);
std::string eval_metrics_json(const EvalMetrics& m, const LabelMap& labels);

/// Argmax with ties resolved toward the lowest index.
std::size_t argmax_row(std::span<const float> row);

using LogitsFn = std::function<Tensor<float>(const Tensor<float>& images)>;

/// Runs `logits` over `data` in chunks of `batch_size` and scores it. Throws
/// UsageError on an empty set.
EvalMetrics evaluate(const LogitsFn& logits, const Batch& data, std::size_t num_classes, std::size_t batch_size = 64);
EvalMetrics evaluate(const ModelParams<float>& params, const Batch& data, std::size_t batch_size = 64);
/// Loads `split` of the corpus rooted at `root` and evaluates it.
EvalMetrics evaluate(const ModelParams<float>& params, const CorpusManifest& manifest, const std::filesystem::path& root,
                     Split split, std::size_t batch_size = 64);

struct TrainResult {
  ModelParams<float> params;
  std::filesystem::path best_checkpoint;
  int best_epoch = 0;
  double best_val_accuracy = -1;
  std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch SGD with momentum (v <- mu v - lr g; w <- w + v). Each epoch
/// shuffles the training rows with a stream seeded by (seed, epoch); the last
/// short batch is kept. The checkpoint is rewritten whenever validation
/// accuracy strictly improves.
TrainResult train(ModelParams<float> params, const Batch& train_data, const Batch& val_data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Loads the train and val splits (decoded once up front) and trains.
TrainResult train(ModelParams<float> params, const CorpusManifest& manifest, const std::filesystem::path& root,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Rows of `data` selected by `indices`, in that order.
Batch gather(const Batch& data, std::span<const std::size_t> indices);

}  // namespace movietour
