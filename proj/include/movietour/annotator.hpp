#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "movietour/labels.hpp"
#include "movietour/model.hpp"

namespace movietour {

inline constexpr int kUnknownLabel = -1;

struct FramePrediction {
  std::int64_t timestamp_ms = 0;
  int label_index = kUnknownLabel;
  double confidence = 0;
  std::vector<std::pair<int, double>> topk;  // descending; ties keep the lower index first
};

struct CaptionSegment {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  int label_index = 0;
  double mean_confidence = 0;

  friend bool operator==(const CaptionSegment&, const CaptionSegment&) = default;
};

struct Frame {
  std::int64_t timestamp_ms = 0;
  std::filesystem::path path;
};

/// Softmax over one logit row, then the k most probable classes.
FramePrediction prediction_from_logits(std::span<const float> logits, std::size_t k, std::int64_t timestamp_ms = 0);

/// Loads the image with the corpus normalization and predicts. Throws
/// UsageError when k is outside [1, num_classes].
FramePrediction predict_image(const ModelParams<float>& params, const std::filesystem::path& image, std::size_t k);

/// Predicts every frame (batched forward passes); output order follows input.
std::vector<FramePrediction> predict_frames(const ModelParams<float>& params, const std::vector<Frame>& frames,
                                            std::size_t k = 1, std::size_t batch_size = 32);

/// Frames named NNNNNNNN.{jpg,jpeg,png} (milliseconds), sorted by time. Other
/// files are ignored. Throws InputError when no frame matches.
std::vector<Frame> list_frame_directory(const std::filesystem::path& dir);

/// Lines of `<ms>\t<path>`; relative paths resolve against the list's folder.
std::vector<Frame> read_frame_list(const std::filesystem::path& list_file);

/// Throws InputError at the first index whose timestamp does not increase.
void check_timestamps(std::span<const std::int64_t> timestamps);

/// Per frame: the argmax label, or UNKNOWN when confidence < threshold.
std::vector<int> threshold_labels(const std::vector<FramePrediction>& predictions, double threshold);

/// Centered window of width `window` (odd), truncated at the edges. A label
/// wins only with a strict majority of the window's votes; otherwise UNKNOWN.
std::vector<int> majority_smooth(std::span<const int> labels, std::size_t window);

/// Groups runs of equal labels into [first_ts, next_run_ts) segments; the last
/// run ends at last_ts + median inter-frame gap (1000 ms for a single frame).
/// UNKNOWN runs are dropped. Confidence is the mean over the run's frames.
std::vector<CaptionSegment> build_segments(std::span<const int> labels, std::span<const double> confidences,
                                           std::span<const std::int64_t> timestamps);

/// threshold -> smooth -> segment.
std::vector<CaptionSegment> annotate_predictions(const std::vector<FramePrediction>& predictions, double threshold,
                                                 std::size_t window);

std::vector<CaptionSegment> annotate_frames(const ModelParams<float>& params, const std::vector<Frame>& frames,
                                            double threshold = 0.5, std::size_t window = 5);

std::string format_srt_time(std::int64_t ms);
std::string emit_srt(const std::vector<CaptionSegment>& segments, const LabelMap& labels);
std::string emit_json(const std::vector<CaptionSegment>& segments, const LabelMap& labels);
/// Inverse of emit_json. Throws DataError for malformed input or unknown labels.
std::vector<CaptionSegment> parse_json_track(std::string_view text, const LabelMap& labels);

std::string prediction_json(const FramePrediction& prediction, const LabelMap& labels);

}  // namespace movietour
