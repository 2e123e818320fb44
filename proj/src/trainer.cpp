#include "movietour/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include "json.hpp"

#include "movietour/errors.hpp"
#include "movietour/ops.hpp"

namespace movietour {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// config

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError(fmt::format("epochs must be >= 1, got {}", epochs));
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(fmt::format("learning_rate must be finite and non-negative, got {}", learning_rate));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(fmt::format("momentum must be in [0, 1), got {}", momentum));
  if (!seed) throw ConfigError("seed is required");
  if (select_on != "val_accuracy") throw ConfigError(fmt::format("select_on must be val_accuracy, got \"{}\"", select_on));
  if (checkpoint_out.empty()) throw ConfigError("checkpoint_out must not be empty");
  architecture(2).validate();
}

ArchitectureConfig TrainConfig::architecture(std::uint32_t num_classes) const {
  ArchitectureConfig a;
  a.input_size = input_size;
  a.conv1_filters = conv1_filters;
  a.conv2_filters = conv2_filters;
  a.kernel = kernel;
  a.num_classes = num_classes;
  return a;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(fmt::format("{}: \"{}\" is not a valid integer", key, value));
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError(fmt::format("{}: \"{}\" is not a valid number", key, value));
  return out;
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("line {}: missing key", line_no));
    if (const auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(fmt::format("{}: repeated on line {} (first on line {})", key, line_no, it->second));
    }
    seen[key] = line_no;
    if (value.empty()) throw ConfigError(fmt::format("{}: missing value", key));

    if (key == "epochs") {
      c.epochs = parse_int<int>(key, value);
    } else if (key == "batch_size") {
      c.batch_size = parse_int<std::size_t>(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_real(key, value);
    } else if (key == "momentum") {
      c.momentum = parse_real(key, value);
    } else if (key == "seed") {
      c.seed = parse_int<std::uint64_t>(key, value);
    } else if (key == "init_seed") {
      c.init_seed = parse_int<std::uint64_t>(key, value);
    } else if (key == "input_size") {
      c.input_size = parse_int<std::uint32_t>(key, value);
    } else if (key == "checkpoint_out") {
      c.checkpoint_out = value;
    } else if (key == "history_out") {
      c.history_out = value;
    } else if (key == "select_on") {
      c.select_on = value;
    } else if (key == "conv1_filters") {
      c.conv1_filters = parse_int<std::uint32_t>(key, value);
    } else if (key == "conv2_filters") {
      c.conv2_filters = parse_int<std::uint32_t>(key, value);
    } else if (key == "kernel") {
      c.kernel = parse_int<std::uint32_t>(key, value);
    } else {
      throw ConfigError(fmt::format("unknown config key \"{}\" on line {}", key, line_no));
    }
  }
  c.validate();
  return c;
}

TrainConfig read_train_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open config {}", path.string()));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_train_config(text);
}

// ---------------------------------------------------------------------------
// metrics

namespace {

ordered_json confusion_json(const ConfusionMatrix& m) {
  ordered_json j = ordered_json::array();
  for (const auto& row : m) j.push_back(row);
  return j;
}

}  // namespace

std::string epoch_metrics_json(const EpochMetrics& m) {
  ordered_json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["train_accuracy"] = m.train_accuracy;
  j["val_loss"] = m.val_loss;
  j["val_accuracy"] = m.val_accuracy;
  j["val_confusion"] = confusion_json(m.val_confusion);
  j["checkpoint_saved"] = m.checkpoint_saved;
  return j.dump();
}

std::string eval_metrics_json(const EvalMetrics& m, const LabelMap& labels) {
  ordered_json j;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  j["correct"] = m.correct;
  j["total"] = m.total;
  ordered_json names = ordered_json::array();
  for (const auto& d : labels.entries()) names.push_back(d.name);
  j["labels"] = std::move(names);
  j["confusion"] = confusion_json(m.confusion);
  return j.dump(2) + "\n";
}

std::size_t argmax_row(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

Batch gather(const Batch& data, std::span<const std::size_t> indices) {
  const Shape& s = data.images.shape();
  const std::size_t per = shape_numel(s) / s[0];
  Shape out_shape = s;
  out_shape[0] = indices.size();
  Batch out{Tensor<float>(out_shape), {}};
  out.labels.reserve(indices.size());
  const auto src = data.images.data();
  auto dst = out.images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    std::copy_n(src.begin() + i * per, per, dst.begin() + k * per);
    out.labels.push_back(data.labels.at(i));
  }
  return out;
}

namespace {

std::size_t batch_rows(const Batch& b) { return b.images.shape().empty() ? 0 : b.images.shape()[0]; }

void check_labels(const Batch& data, std::size_t num_classes, std::string_view what) {
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] < 0 || static_cast<std::size_t>(data.labels[i]) >= num_classes) {
      throw ConfigError(fmt::format("{} sample {} has label {} but the model has {} classes", what, i, data.labels[i],
                                    num_classes));
    }
  }
}

}  // namespace

EvalMetrics evaluate(const LogitsFn& logits, const Batch& data, std::size_t num_classes, std::size_t batch_size) {
  const std::size_t n = batch_rows(data);
  if (n == 0) throw UsageError("cannot evaluate an empty split");
  if (data.labels.size() != n) throw DimensionError("label count does not match image count");
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  check_labels(data, num_classes, "evaluation");
  EvalMetrics m;
  m.total = n;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  double loss_sum = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch chunk = gather(data, idx);
    const Tensor<float> z = logits(chunk.images);
    if (z.shape() != Shape{end - start, num_classes}) {
      throw DimensionError(fmt::format("logits have shape {}, expected [{}, {}]", shape_str(z.shape()), end - start,
                                       num_classes));
    }
    const auto xent = ops::softmax_xent(z, std::span<const int>(chunk.labels));
    loss_sum += static_cast<double>(xent.loss) * static_cast<double>(end - start);
    for (std::size_t r = 0; r < end - start; ++r) {
      const std::size_t pred = argmax_row(z.data().subspan(r * num_classes, num_classes));
      const auto truth = static_cast<std::size_t>(chunk.labels[r]);
      ++m.confusion[truth][pred];
      if (pred == truth) ++m.correct;
    }
  }
  m.loss = loss_sum / static_cast<double>(n);
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(n);
  return m;
}

EvalMetrics evaluate(const ModelParams<float>& params, const Batch& data, std::size_t batch_size) {
  return evaluate([&](const Tensor<float>& x) { return forward(params, x); }, data, params.config.num_classes,
                  batch_size);
}

namespace {

void check_class_count(const ModelParams<float>& params, const CorpusManifest& manifest) {
  if (manifest.labels.size() != params.config.num_classes) {
    throw ConfigError(fmt::format("model has {} classes but the corpus label map has {}", params.config.num_classes,
                                  manifest.labels.size()));
  }
}

Batch load_split(const CorpusManifest& manifest, const fs::path& root, Split split, std::uint32_t input_size) {
  const auto records = manifest.in_split(split);
  if (records.empty()) throw UsageError(fmt::format("the {} split is empty", split_name(split)));
  return load_batch(root, records, static_cast<int>(input_size));
}

}  // namespace

EvalMetrics evaluate(const ModelParams<float>& params, const CorpusManifest& manifest, const fs::path& root,
                     Split split, std::size_t batch_size) {
  check_class_count(params, manifest);
  return evaluate(params, load_split(manifest, root, split, params.config.input_size), batch_size);
}

// ---------------------------------------------------------------------------
// training

TrainResult train(ModelParams<float> params, const Batch& train_data, const Batch& val_data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  params.validate();
  const std::size_t classes = params.config.num_classes;
  const std::size_t n = batch_rows(train_data);
  if (n == 0) throw UsageError("the train split is empty");
  if (batch_rows(val_data) == 0) throw UsageError("the val split is empty");
  if (train_data.labels.size() != n) throw DimensionError("label count does not match image count");
  check_labels(train_data, classes, "train");
  check_labels(val_data, classes, "val");

  std::ofstream history;
  if (config.history_out) {
    history.open(*config.history_out, std::ios::binary | std::ios::trunc);
    if (!history) throw IoError(fmt::format("cannot open history file {}", config.history_out->string()));
  }

  const auto lr = static_cast<float>(config.learning_rate);
  const auto mu = static_cast<float>(config.momentum);
  std::array<std::vector<float>, 6> velocity;
  {
    const auto ts = params.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) velocity[i].assign(ts[i]->numel(), 0.0f);
  }

  TrainResult result;
  result.best_checkpoint = config.checkpoint_out;
  std::vector<std::size_t> order(n);
  Tape<float> tape;
  const std::uint64_t seed = *config.seed;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const Batch batch = gather(train_data, std::span<const std::size_t>(order).subspan(start, end - start));

      tape.clear();
      params.zero_grad();
      const auto logits = forward(params, batch.images, tape);
      const auto xent = tape.softmax_xent(logits, std::span<const int>(batch.labels));
      const float loss = tape.value(xent.loss).data()[0];
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch, batch_index + 1,
                              fmt::format("loss became {} at epoch {}, batch {}", loss, epoch, batch_index + 1));
      }
      const Tensor<float>& z = tape.value(logits);
      for (std::size_t r = 0; r < end - start; ++r) {
        if (argmax_row(z.data().subspan(r * classes, classes)) == static_cast<std::size_t>(batch.labels[r])) ++correct;
      }
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - start);
      tape.backward(xent.loss);

      const auto ts = params.tensors();
      for (std::size_t t = 0; t < ts.size(); ++t) {
        auto w = ts[t]->data();
        const auto g = std::as_const(*ts[t]).grad();
        auto& v = velocity[t];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] - lr * g[i];
          w[i] += v[i];
        }
      }
    }
    tape.clear();
    params.zero_grad();

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    const EvalMetrics val = evaluate(params, val_data, std::max<std::size_t>(config.batch_size, 64));
    m.val_loss = val.loss;
    m.val_accuracy = val.accuracy;
    m.val_confusion = val.confusion;
    if (m.val_accuracy > result.best_val_accuracy) {
      if (!params.conv1_weight.all_finite() || !params.conv2_weight.all_finite() || !params.dense_weight.all_finite()) {
        throw DivergenceError(epoch, batch_index, fmt::format("parameters became non-finite in epoch {}", epoch));
      }
      save_checkpoint(params, config.checkpoint_out);
      result.best_val_accuracy = m.val_accuracy;
      result.best_epoch = epoch;
      m.checkpoint_saved = true;
    }
    if (history.is_open()) {
      history << epoch_metrics_json(m) << '\n';
      history.flush();
    }
    if (on_epoch) on_epoch(m);
    result.history.push_back(std::move(m));
  }
  for (auto* t : params.tensors()) t->clear_grad();
  result.params = std::move(params);
  return result;
}

TrainResult train(ModelParams<float> params, const CorpusManifest& manifest, const fs::path& root,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  check_class_count(params, manifest);
  if (params.config.input_size != config.input_size) {
    throw ConfigError(fmt::format("model input_size {} differs from config input_size {}", params.config.input_size,
                                  config.input_size));
  }
  const Batch train_data = load_split(manifest, root, Split::kTrain, config.input_size);
  const Batch val_data = load_split(manifest, root, Split::kVal, config.input_size);
  return train(std::move(params), train_data, val_data, config, on_epoch);
}

}  // namespace movietour
