#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "movietour/image.hpp"
#include "movietour/labels.hpp"
#include "movietour/tensor.hpp"

namespace movietour {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
/// Accepts "train", "val", "test".
Split parse_split(std::string_view name);

struct SampleRecord {
  std::string path;  // relative to the corpus root, '/'-separated
  int label_index = 0;
  std::optional<Split> split;
  std::uint64_t content_hash = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

using SplitRatios = std::array<double, 3>;

struct CorpusManifest {
  LabelMap labels;
  std::vector<SampleRecord> records;
  std::optional<SplitRatios> ratios;
  std::optional<std::uint64_t> seed;

  std::vector<SampleRecord> in_split(Split split) const;
  /// Records per class for one split (or all records when split is empty).
  std::vector<std::size_t> class_counts(std::optional<Split> split = std::nullopt) const;

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

inline constexpr std::string_view kManifestFile = "manifest.jsonl";
inline constexpr std::string_view kReportFile = "curation_report.json";

/// JSON lines: a header object {labels, ratios, seed} followed by one
/// {path, label_index, split, hash} object per record.
std::string manifest_to_jsonl(const CorpusManifest& manifest);
CorpusManifest manifest_from_jsonl(std::string_view text);
void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Download and curation

struct UrlRow {
  std::string destination;
  std::string url;
  std::string license;
};

struct UrlManifest {
  std::vector<UrlRow> rows;
};

/// CSV with header `class,url,license`. Quoted fields are supported.
/// Throws UnknownClassError listing every destination not in `labels` and
/// DataError for malformed rows or URLs.
UrlManifest parse_url_manifest(std::string_view csv, const LabelMap& labels);
UrlManifest read_url_manifest(const std::filesystem::path& path, const LabelMap& labels);

struct FetchResult {
  bool ok = false;
  std::string bytes;
  std::string error;
};

using Fetcher = std::function<FetchResult(const std::string& url)>;

/// libcurl-backed fetcher (http, https and file URLs).
FetchResult curl_fetch(const std::string& url);

struct ClassCounters {
  std::size_t downloaded = 0;
  std::size_t failed = 0;
  std::size_t rejected_undecodable = 0;
  std::size_t rejected_duplicate = 0;
  std::size_t stored = 0;

  friend bool operator==(const ClassCounters&, const ClassCounters&) = default;
};

struct CurationReport {
  std::vector<std::pair<std::string, ClassCounters>> classes;  // label-map order
  std::vector<std::string> failures;                          // "url: reason"

  ClassCounters totals() const;
  std::string to_json() const;
};

struct BuildOptions {
  int short_side = 128;
  int workers = 4;
  Fetcher fetcher = curl_fetch;
};

/// Fetch every URL, keep decodable PNG/JPEG payloads, resize so the short side
/// is `short_side`, drop exact difference-hash duplicates per class (including
/// files already stored), and store as out_dir/<class>/<hash>.png. The report
/// is written to out_dir/curation_report.json.
CurationReport build_corpus(const UrlManifest& urls, const std::filesystem::path& out_dir,
                            const LabelMap& labels = LabelMap::movietour(), const BuildOptions& options = {});

// ---------------------------------------------------------------------------
// Scanning, splitting, loading

struct ScanResult {
  CorpusManifest manifest;  // unsplit
  std::vector<std::string> warnings;
  std::vector<std::string> duplicates;  // relative paths skipped as duplicates
  std::vector<std::string> skipped;     // relative paths that failed to decode
};

/// One subdirectory per class name; anything else at the top level that is a
/// directory raises UnknownClassError. Files inside class directories are
/// visited in lexicographic order.
ScanResult scan_directory(const std::filesystem::path& root, const LabelMap& labels = LabelMap::movietour());

/// Per class: sort by path, shuffle with a seeded mt19937_64, then cut by
/// largest-remainder rounding of ratios * count.
CorpusManifest stratified_split(const CorpusManifest& manifest, const SplitRatios& ratios, std::uint64_t seed);

/// Largest-remainder apportionment of `count` items; ties in the remainder go
/// to the earlier split.
std::array<std::size_t, 3> split_counts(std::size_t count, const SplitRatios& ratios);

struct Batch {
  Tensor<float> images;  // [N,3,S,S], values in [-1, 1]
  std::vector<int> labels;
};

/// Center crop to square, bilinear resize to size x size, scale to [0,1] and
/// map to [-1,1] with (x - 0.5) / 0.5. Channel order RGB. Shape [1,3,S,S].
Tensor<float> image_to_tensor(const Image& image, int size);

Batch load_batch(const std::filesystem::path& root, const std::vector<SampleRecord>& records, int input_size);

}  // namespace movietour
