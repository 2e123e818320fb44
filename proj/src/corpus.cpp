#include "movietour/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "movietour/errors.hpp"

namespace movietour {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw UsageError(fmt::format("unknown split \"{}\" (expected train, val or test)", name));
}

std::vector<SampleRecord> CorpusManifest::in_split(Split split) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> CorpusManifest::class_counts(std::optional<Split> split) const {
  std::vector<std::size_t> counts(labels.size(), 0);
  for (const auto& r : records) {
    if (!split || r.split == split) ++counts.at(static_cast<std::size_t>(r.label_index));
  }
  return counts;
}

// ---------------------------------------------------------------------------
// manifest.jsonl

std::string manifest_to_jsonl(const CorpusManifest& manifest) {
  ordered_json header;
  ordered_json labels = ordered_json::array();
  for (const auto& d : manifest.labels.entries()) {
    labels.push_back(ordered_json{{"index", d.index}, {"name", d.name}, {"country", d.country}});
  }
  header["labels"] = std::move(labels);
  header["ratios"] = manifest.ratios ? ordered_json(*manifest.ratios) : ordered_json(nullptr);
  header["seed"] = manifest.seed ? ordered_json(*manifest.seed) : ordered_json(nullptr);
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& r : manifest.records) {
    ordered_json rec;
    rec["path"] = r.path;
    rec["label_index"] = r.label_index;
    rec["split"] = r.split ? ordered_json(std::string(split_name(*r.split))) : ordered_json(nullptr);
    rec["hash"] = hash_hex(r.content_hash);
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

CorpusManifest manifest_from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  CorpusManifest m;
  bool have_header = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line);
      if (!have_header) {
        std::vector<Destination> entries;
        for (const auto& e : j.at("labels")) {
          entries.push_back({e.at("index").get<int>(), e.at("name").get<std::string>(),
                             e.value("country", std::string())});
        }
        m.labels = LabelMap(std::move(entries));
        if (!j.at("ratios").is_null()) m.ratios = j.at("ratios").get<SplitRatios>();
        if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      SampleRecord r;
      r.path = j.at("path").get<std::string>();
      r.label_index = j.at("label_index").get<int>();
      if (r.label_index < 0 || static_cast<std::size_t>(r.label_index) >= m.labels.size()) {
        throw DataError(fmt::format("manifest line {}: label_index {} is not in the label map", line_no,
                                    r.label_index));
      }
      if (!j.at("split").is_null()) r.split = parse_split(j.at("split").get<std::string>());
      r.content_hash = parse_hash_hex(j.at("hash").get<std::string>());
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("manifest line {}: {}", line_no, e.what()));
  } catch (const UsageError& e) {
    throw DataError(fmt::format("manifest line {}: {}", line_no, e.what()));
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("manifest header: {}", e.what()));
  }
  if (!have_header) throw DataError("manifest is empty: missing header line");
  return m;
}

void write_manifest(const CorpusManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << manifest_to_jsonl(manifest);
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open manifest {}", path.string()));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_jsonl(text);
}

// ---------------------------------------------------------------------------
// scan

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

ScanResult scan_directory(const fs::path& root, const LabelMap& labels) {
  if (!fs::is_directory(root)) throw IoError(fmt::format("{} is not a directory", root.string()));
  std::vector<std::string> class_dirs;
  std::vector<std::string> unknown;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (labels.find(name)) {
      class_dirs.push_back(name);
    } else {
      unknown.push_back(name);
    }
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    throw UnknownClassError(fmt::format("directories not in the label map: {}", fmt::join(unknown, ", ")));
  }

  ScanResult res;
  res.manifest.labels = labels;
  for (const auto& dest : labels.entries()) {
    const fs::path dir = root / dest.name;
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::set<std::uint64_t> seen;
    std::size_t kept = 0;
    for (const auto& file : files) {
      const std::string rel = dest.name + "/" + file.filename().string();
      std::uint64_t hash = 0;
      try {
        hash = difference_hash(decode_image(read_file(file), file.string()));
      } catch (const ImageLoadError& e) {
        res.warnings.push_back(fmt::format("skipping {}: {}", rel, e.what()));
        res.skipped.push_back(rel);
        continue;
      }
      if (!seen.insert(hash).second) {
        res.warnings.push_back(fmt::format("skipping {}: duplicate difference hash {}", rel, hash_hex(hash)));
        res.duplicates.push_back(rel);
        continue;
      }
      res.manifest.records.push_back(SampleRecord{rel, dest.index, std::nullopt, hash});
      ++kept;
    }
    if (kept == 0) res.warnings.push_back(fmt::format("class \"{}\" has 0 images", dest.name));
  }
  return res;
}

// ---------------------------------------------------------------------------
// split

std::array<std::size_t, 3> split_counts(std::size_t count, const SplitRatios& ratios) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("split ratios must be finite and non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError(fmt::format("split ratios sum to {}, not 1", sum));
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(count);
    // Absorb representation error such as 0.1 * 150 = 15.000000000000002.
    const double whole = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    // Quantized so that mathematically equal remainders compare equal.
    frac[i] = std::round(std::max(0.0, quota - whole) * 1e6) / 1e6;
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

CorpusManifest stratified_split(const CorpusManifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  CorpusManifest out = manifest;
  out.ratios = ratios;
  out.seed = seed;
  std::vector<std::vector<std::size_t>> by_class(manifest.labels.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_class.at(static_cast<std::size_t>(manifest.records[i].label_index)).push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    const std::string& name = manifest.labels.at(c).name;
    if (idx.size() < 3) {
      throw SplitError(fmt::format("class \"{}\" has {} images; at least 3 are needed to split", name, idx.size()));
    }
    const auto counts = split_counts(idx.size(), ratios);
    for (std::size_t s = 0; s < 3; ++s) {
      if (counts[s] == 0) {
        throw SplitError(fmt::format("class \"{}\" would have an empty {} split ({} images at ratios {:g}/{:g}/{:g})",
                                     name, split_name(static_cast<Split>(s)), idx.size(), ratios[0], ratios[1],
                                     ratios[2]));
      }
    }
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return manifest.records[a].path < manifest.records[b].path; });
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) out.records[idx[pos++]].split = static_cast<Split>(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch loading

Tensor<float> image_to_tensor(const Image& image, int size) {
  const FloatImage resized = resize_bilinear(to_float(center_crop_square(image)), size, size);
  const std::size_t s = static_cast<std::size_t>(size);
  Tensor<float> out({1, 3, s, s});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const float v = resized.pixels[(y * s + x) * 3 + c] / 255.0f;
        out.at4(0, c, y, x) = std::clamp((v - 0.5f) / 0.5f, -1.0f, 1.0f);
      }
    }
  }
  return out;
}

Batch load_batch(const fs::path& root, const std::vector<SampleRecord>& records, int input_size) {
  if (records.empty()) throw UsageError("load_batch needs at least one record");
  if (input_size <= 0) throw ConfigError("input_size must be positive");
  const std::size_t s = static_cast<std::size_t>(input_size);
  const std::size_t per_image = 3 * s * s;
  Batch batch{Tensor<float>({records.size(), 3, s, s}), {}};
  batch.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const fs::path path = root / records[i].path;
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ImageLoadError(path.string(), fmt::format("{}: cannot open file", path.string()));
      bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    const Tensor<float> one = image_to_tensor(decode_image(bytes, path.string()), input_size);
    std::copy(one.data().begin(), one.data().end(), batch.images.data().begin() + i * per_image);
    batch.labels.push_back(records[i].label_index);
  }
  return batch;
}

}  // namespace movietour
