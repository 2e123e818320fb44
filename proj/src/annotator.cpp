#include "movietour/annotator.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <regex>

#include <fmt/format.h>
#include "json.hpp"

#include "movietour/corpus.hpp"
#include "movietour/errors.hpp"
#include "movietour/ops.hpp"

namespace movietour {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

FramePrediction prediction_from_logits(std::span<const float> logits, std::size_t k, std::int64_t timestamp_ms) {
  if (k < 1 || k > logits.size()) {
    throw UsageError(fmt::format("top-k must be between 1 and {}, got {}", logits.size(), k));
  }
  const Tensor<double> row({1, logits.size()}, std::vector<double>(logits.begin(), logits.end()));
  const Tensor<double> probs = ops::softmax(row);
  if (!probs.all_finite()) throw NumericError("non-finite probabilities in prediction");
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  FramePrediction p;
  p.timestamp_ms = timestamp_ms;
  for (std::size_t i = 0; i < k; ++i) p.topk.emplace_back(static_cast<int>(order[i]), probs[order[i]]);
  p.label_index = p.topk[0].first;
  p.confidence = p.topk[0].second;
  return p;
}

FramePrediction predict_image(const ModelParams<float>& params, const fs::path& image, std::size_t k) {
  const std::size_t classes = params.config.num_classes;
  if (k < 1 || k > classes) throw UsageError(fmt::format("top-k must be between 1 and {}, got {}", classes, k));
  const Tensor<float> x = image_to_tensor(read_image(image), static_cast<int>(params.config.input_size));
  const Tensor<float> z = forward(params, x);
  return prediction_from_logits(z.data(), k, 0);
}

std::vector<FramePrediction> predict_frames(const ModelParams<float>& params, const std::vector<Frame>& frames,
                                            std::size_t k, std::size_t batch_size) {
  const std::size_t classes = params.config.num_classes;
  if (k < 1 || k > classes) throw UsageError(fmt::format("top-k must be between 1 and {}, got {}", classes, k));
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  std::vector<FramePrediction> out;
  out.reserve(frames.size());
  const auto s = static_cast<std::size_t>(params.config.input_size);
  const std::size_t per = 3 * s * s;
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    const std::size_t end = std::min(frames.size(), start + batch_size);
    Tensor<float> x({end - start, 3, s, s});
    for (std::size_t i = start; i < end; ++i) {
      const Tensor<float> one = image_to_tensor(read_image(frames[i].path), static_cast<int>(s));
      std::copy(one.data().begin(), one.data().end(), x.data().begin() + (i - start) * per);
    }
    const Tensor<float> z = forward(params, x);
    for (std::size_t i = start; i < end; ++i) {
      out.push_back(prediction_from_logits(z.data().subspan((i - start) * classes, classes), k, frames[i].timestamp_ms));
    }
  }
  return out;
}

std::vector<Frame> list_frame_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("frame directory {} does not exist", dir.string()));
  static const std::regex pattern(R"(^(\d{8})\.(jpg|jpeg|png|JPG|JPEG|PNG)$)");
  std::vector<Frame> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) continue;
    frames.push_back({std::stoll(m[1].str()), entry.path()});
  }
  if (frames.empty()) {
    throw InputError(0, fmt::format("no frames named NNNNNNNN.jpg|png in {}", dir.string()));
  }
  std::sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) {
    return a.timestamp_ms != b.timestamp_ms ? a.timestamp_ms < b.timestamp_ms : a.path < b.path;
  });
  std::vector<std::int64_t> ts;
  for (const auto& f : frames) ts.push_back(f.timestamp_ms);
  check_timestamps(ts);
  return frames;
}

std::vector<Frame> read_frame_list(const fs::path& list_file) {
  std::ifstream in(list_file, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open frame list {}", list_file.string()));
  const fs::path base = list_file.parent_path();
  std::vector<Frame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    std::int64_t ms = 0;
    const char* first = line.data();
    const char* last = line.data() + (tab == std::string::npos ? 0 : tab);
    const auto [ptr, ec] = std::from_chars(first, last, ms);
    if (tab == std::string::npos || tab + 1 >= line.size() || ec != std::errc() || ptr != last || ms < 0) {
      throw InputError(frames.size(), fmt::format("{}:{}: expected <ms>\\t<path>", list_file.string(), line_no));
    }
    fs::path p = line.substr(tab + 1);
    if (p.is_relative()) p = base / p;
    frames.push_back({ms, std::move(p)});
  }
  if (frames.empty()) throw InputError(0, fmt::format("frame list {} is empty", list_file.string()));
  std::vector<std::int64_t> ts;
  for (const auto& f : frames) ts.push_back(f.timestamp_ms);
  check_timestamps(ts);
  return frames;
}

void check_timestamps(std::span<const std::int64_t> timestamps) {
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw InputError(i, fmt::format("frame {} has timestamp {} ms, not after the previous {} ms", i, timestamps[i],
                                      timestamps[i - 1]));
    }
  }
}

std::vector<int> threshold_labels(const std::vector<FramePrediction>& predictions, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw UsageError(fmt::format("threshold must be in [0, 1], got {}", threshold));
  }
  std::vector<int> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back(p.confidence < threshold ? kUnknownLabel : p.label_index);
  return out;
}

std::vector<int> majority_smooth(std::span<const int> labels, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw UsageError(fmt::format("window must be odd and >= 1, got {}", window));
  const std::size_t half = window / 2;
  const std::size_t n = labels.size();
  std::vector<int> out(n, kUnknownLabel);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    const std::size_t votes = hi - lo;
    for (std::size_t j = lo; j < hi; ++j) {
      const auto count = static_cast<std::size_t>(std::count(labels.begin() + lo, labels.begin() + hi, labels[j]));
      if (2 * count > votes) {
        out[i] = labels[j];
        break;
      }
    }
  }
  return out;
}

std::vector<CaptionSegment> build_segments(std::span<const int> labels, std::span<const double> confidences,
                                           std::span<const std::int64_t> timestamps) {
  const std::size_t n = labels.size();
  if (confidences.size() != n || timestamps.size() != n) {
    throw DimensionError("labels, confidences and timestamps must have equal length");
  }
  check_timestamps(timestamps);
  std::vector<CaptionSegment> out;
  if (n == 0) return out;

  std::int64_t tail = 1000;
  if (n > 1) {
    std::vector<std::int64_t> gaps;
    for (std::size_t i = 1; i < n; ++i) gaps.push_back(timestamps[i] - timestamps[i - 1]);
    const std::size_t mid = (gaps.size() - 1) / 2;  // lower median
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
    tail = gaps[mid];
  }

  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double sum = 0;
    while (j < n && labels[j] == labels[i]) sum += confidences[j++];
    if (labels[i] != kUnknownLabel) {
      const std::int64_t end = j < n ? timestamps[j] : timestamps[n - 1] + tail;
      out.push_back({timestamps[i], end, labels[i], sum / static_cast<double>(j - i)});
    }
    i = j;
  }
  return out;
}

std::vector<CaptionSegment> annotate_predictions(const std::vector<FramePrediction>& predictions, double threshold,
                                                 std::size_t window) {
  const auto thresholded = threshold_labels(predictions, threshold);
  const auto smoothed = majority_smooth(thresholded, window);
  std::vector<double> conf;
  std::vector<std::int64_t> ts;
  for (const auto& p : predictions) {
    conf.push_back(p.confidence);
    ts.push_back(p.timestamp_ms);
  }
  return build_segments(smoothed, conf, ts);
}

std::vector<CaptionSegment> annotate_frames(const ModelParams<float>& params, const std::vector<Frame>& frames,
                                            double threshold, std::size_t window) {
  if (frames.empty()) throw InputError(0, "no frames to annotate");
  std::vector<std::int64_t> ts;
  for (const auto& f : frames) ts.push_back(f.timestamp_ms);
  check_timestamps(ts);
  // Validate cheap arguments before running the model.
  threshold_labels({}, threshold);
  majority_smooth({}, window);
  return annotate_predictions(predict_frames(params, frames), threshold, window);
}

std::string format_srt_time(std::int64_t ms) {
  if (ms < 0) throw UsageError("negative SRT timestamp");
  return fmt::format("{:02d}:{:02d}:{:02d},{:03d}", ms / 3'600'000, ms / 60'000 % 60, ms / 1000 % 60, ms % 1000);
}

namespace {

const Destination& destination(const LabelMap& labels, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= labels.size()) {
    throw UsageError(fmt::format("segment label {} is not in the label map", index));
  }
  return labels.at(static_cast<std::size_t>(index));
}

}  // namespace

std::string emit_srt(const std::vector<CaptionSegment>& segments, const LabelMap& labels) {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    const auto& d = destination(labels, s.label_index);
    if (i > 0) out += '\n';
    out += fmt::format("{}\n{} --> {}\n{}, {} (confidence {:.2f})\n", i + 1, format_srt_time(s.start_ms),
                       format_srt_time(s.end_ms), d.name, d.country, s.mean_confidence);
  }
  return out;
}

std::string emit_json(const std::vector<CaptionSegment>& segments, const LabelMap& labels) {
  ordered_json j = ordered_json::array();
  for (const auto& s : segments) {
    const auto& d = destination(labels, s.label_index);
    j.push_back(ordered_json{{"start_ms", s.start_ms},
                             {"end_ms", s.end_ms},
                             {"label", d.name},
                             {"country", d.country},
                             {"confidence", s.mean_confidence}});
  }
  return j.dump(2);
}

std::vector<CaptionSegment> parse_json_track(std::string_view text, const LabelMap& labels) {
  std::vector<CaptionSegment> out;
  try {
    const auto j = ordered_json::parse(text);
    if (!j.is_array()) throw DataError("caption track must be a JSON array");
    for (const auto& e : j) {
      const auto name = e.at("label").get<std::string>();
      const auto index = labels.find(name);
      if (!index) throw DataError(fmt::format("caption label \"{}\" is not in the label map", name));
      out.push_back({e.at("start_ms").get<std::int64_t>(), e.at("end_ms").get<std::int64_t>(), *index,
                     e.at("confidence").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed caption track: {}", e.what()));
  }
  return out;
}

std::string prediction_json(const FramePrediction& prediction, const LabelMap& labels) {
  ordered_json top = ordered_json::array();
  for (const auto& [index, prob] : prediction.topk) {
    const auto& d = destination(labels, index);
    top.push_back(ordered_json{{"index", index}, {"label", d.name}, {"country", d.country}, {"probability", prob}});
  }
  ordered_json j;
  j["timestamp_ms"] = prediction.timestamp_ms;
  j["label"] = prediction.label_index == kUnknownLabel ? ordered_json(nullptr)
                                                        : ordered_json(destination(labels, prediction.label_index).name);
  j["confidence"] = prediction.confidence;
  j["topk"] = std::move(top);
  return j.dump(2) + "\n";
}

}  // namespace movietour
