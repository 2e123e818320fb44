#pragma once

// Brute-force reference for temporal smoothing and segmentation, plus a strict
// SRT grammar checker.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "movietour/annotator.hpp"

namespace oracle {

/// Per frame: count every label in the truncated window with a map and accept
/// the most frequent only if it holds more than half the votes.
inline std::vector<int> smooth(const std::vector<int>& labels, int window) {
  const int n = static_cast<int>(labels.size());
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    std::map<int, int> counts;
    int votes = 0;
    for (int j = i - window / 2; j <= i + window / 2; ++j) {
      if (j < 0 || j >= n) continue;
      ++counts[labels[static_cast<std::size_t>(j)]];
      ++votes;
    }
    int best = movietour::kUnknownLabel;
    for (const auto& [label, count] : counts) {
      if (2 * count > votes) best = label;
    }
    out.push_back(best);
  }
  return out;
}

/// Each frame owns [ts_i, ts_{i+1}); the last frame owns the median gap
/// (lower median, 1000 ms for one frame). Adjacent equal labels merge, UNKNOWN
/// intervals disappear.
inline std::vector<movietour::CaptionSegment> segments(const std::vector<int>& labels, const std::vector<double>& conf,
                                                       const std::vector<std::int64_t>& ts) {
  const std::size_t n = labels.size();
  std::vector<movietour::CaptionSegment> out;
  if (n == 0) return out;
  std::int64_t tail = 1000;
  if (n > 1) {
    std::vector<std::int64_t> gaps;
    for (std::size_t i = 1; i < n; ++i) gaps.push_back(ts[i] - ts[i - 1]);
    std::sort(gaps.begin(), gaps.end());
    tail = gaps[(gaps.size() - 1) / 2];
  }
  std::vector<std::size_t> counts;
  std::vector<double> sums;
  std::optional<std::size_t> prev;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t end = i + 1 < n ? ts[i + 1] : ts[i] + tail;
    if (labels[i] == movietour::kUnknownLabel) {
      prev.reset();
      continue;
    }
    if (prev && labels[*prev] == labels[i]) {
      out.back().end_ms = end;
      sums.back() += conf[i];
      ++counts.back();
    } else {
      out.push_back({ts[i], end, labels[i], 0.0});
      sums.push_back(conf[i]);
      counts.push_back(1);
    }
    prev = i;
  }
  for (std::size_t s = 0; s < out.size(); ++s) out[s].mean_confidence = sums[s] / static_cast<double>(counts[s]);
  return out;
}

inline std::int64_t total_duration(const std::vector<movietour::CaptionSegment>& segs) {
  std::int64_t t = 0;
  for (const auto& s : segs) t += s.end_ms - s.start_ms;
  return t;
}

/// Strict SRT: blocks numbered 1..n, `HH:MM:SS,mmm --> HH:MM:SS,mmm` with
/// minutes/seconds < 60 and start < end, one or more non-empty text lines,
/// blocks separated by exactly one blank line, LF endings, final newline.
/// Returns an error description, or an empty string when valid.
inline std::string srt_error(const std::string& text) {
  if (text.empty()) return {};
  if (text.back() != '\n') return "missing final newline";
  if (text.find('\r') != std::string::npos) return "CR found";
  if (text.find("\n\n\n") != std::string::npos) return "more than one blank line between blocks";
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) lines.push_back(line);
  static const std::regex timing(R"(^(\d{2,}):([0-5]\d):([0-5]\d),(\d{3}) --> (\d{2,}):([0-5]\d):([0-5]\d),(\d{3})$)");
  auto to_ms = [](const std::smatch& m, int k) {
    return ((std::stoll(m[k].str()) * 60 + std::stoll(m[k + 1].str())) * 60 + std::stoll(m[k + 2].str())) * 1000 +
           std::stoll(m[k + 3].str());
  };
  std::size_t i = 0;
  long long expected = 1;
  long long last_end = -1;
  while (i < lines.size()) {
    if (lines[i] != std::to_string(expected)) return "bad block number at line " + std::to_string(i + 1);
    if (++i >= lines.size()) return "missing timing line";
    std::smatch m;
    if (!std::regex_match(lines[i], m, timing)) return "bad timing line " + std::to_string(i + 1);
    const long long start = to_ms(m, 1), end = to_ms(m, 5);
    if (start >= end) return "start not before end at line " + std::to_string(i + 1);
    if (start < last_end) return "overlapping blocks at line " + std::to_string(i + 1);
    last_end = end;
    ++i;
    std::size_t text_lines = 0;
    while (i < lines.size() && !lines[i].empty()) {
      ++text_lines;
      ++i;
    }
    if (text_lines == 0) return "block without text";
    if (i < lines.size()) {
      ++i;  // the single blank separator
      if (i >= lines.size()) return "trailing blank line";
    }
    ++expected;
  }
  return {};
}

}  // namespace oracle
