#include <algorithm>
#include <atomic>
#include <fstream>
#include <iterator>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <curl/curl.h>
#include <fmt/format.h>

#include "json.hpp"
#include "movietour/corpus.hpp"
#include "movietour/errors.hpp"
#include "movietour/image.hpp"

namespace movietour {

namespace fs = std::filesystem;

namespace {

// RFC 4180-style CSV: comma separated, optional double quotes, "" escapes.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        row_has_content = false;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (quoted) throw DataError("URL manifest has an unterminated quoted field");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool valid_url(const std::string& url) {
  static const std::regex pattern(R"(^[A-Za-z][A-Za-z0-9+.\-]*://[^\s]+$)");
  return std::regex_match(url, pattern);
}

size_t curl_write(char* data, size_t size, size_t nmemb, void* user) {
  static_cast<std::string*>(user)->append(data, size * nmemb);
  return size * nmemb;
}

void ensure_curl_initialized() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

}  // namespace

UrlManifest parse_url_manifest(std::string_view csv, const LabelMap& labels) {
  const auto rows = parse_csv(csv);
  if (rows.empty()) throw DataError("URL manifest is empty: expected header class,url,license");
  std::vector<std::string> header;
  for (const auto& h : rows[0]) header.push_back(trim(h));
  if (header != std::vector<std::string>{"class", "url", "license"}) {
    throw DataError(fmt::format("URL manifest header must be class,url,license; got {}", fmt::join(header, ",")));
  }
  UrlManifest out;
  std::set<std::string> unknown;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 3) {
      throw DataError(fmt::format("URL manifest row {} has {} fields, expected 3", i + 1, r.size()));
    }
    UrlRow row{trim(r[0]), trim(r[1]), trim(r[2])};
    if (!labels.find(row.destination)) unknown.insert(row.destination);
    if (!valid_url(row.url)) throw DataError(fmt::format("URL manifest row {}: \"{}\" is not a valid URL", i + 1, row.url));
    out.rows.push_back(std::move(row));
  }
  if (!unknown.empty()) {
    throw UnknownClassError(fmt::format("URL manifest names classes not in the label map: {}", fmt::join(unknown, ", ")));
  }
  return out;
}

UrlManifest read_url_manifest(const fs::path& path, const LabelMap& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open URL manifest {}", path.string()));
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_url_manifest(text, labels);
}

FetchResult curl_fetch(const std::string& url) {
  ensure_curl_initialized();
  FetchResult res;
  CURL* curl = curl_easy_init();
  if (!curl) {
    res.error = "curl_easy_init failed";
    return res;
  }
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, curl_write);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &res.bytes);
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_TIMEOUT, 60L);
  curl_easy_setopt(curl, CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(curl, CURLOPT_PROTOCOLS, CURLPROTO_HTTP | CURLPROTO_HTTPS | CURLPROTO_FILE);
  const CURLcode code = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (code != CURLE_OK) {
    res.error = curl_easy_strerror(code);
    res.bytes.clear();
    return res;
  }
  res.ok = true;
  return res;
}

ClassCounters CurationReport::totals() const {
  ClassCounters t;
  for (const auto& [name, c] : classes) {
    t.downloaded += c.downloaded;
    t.failed += c.failed;
    t.rejected_undecodable += c.rejected_undecodable;
    t.rejected_duplicate += c.rejected_duplicate;
    t.stored += c.stored;
  }
  return t;
}

namespace {

nlohmann::ordered_json counters_json(const ClassCounters& c) {
  return {{"downloaded", c.downloaded},
          {"failed", c.failed},
          {"rejected_undecodable", c.rejected_undecodable},
          {"rejected_duplicate", c.rejected_duplicate},
          {"stored", c.stored}};
}

}  // namespace

std::string CurationReport::to_json() const {
  nlohmann::ordered_json j;
  j["classes"] = nlohmann::ordered_json::object();
  for (const auto& [name, c] : classes) j["classes"][name] = counters_json(c);
  j["totals"] = counters_json(totals());
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

CurationReport build_corpus(const UrlManifest& urls, const fs::path& out_dir, const LabelMap& labels,
                            const BuildOptions& options) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError(fmt::format("cannot create output directory {}: {}", out_dir.string(), ec.message()));
  }

  CurationReport report;
  std::vector<std::set<std::uint64_t>> known(labels.size());
  for (const auto& dest : labels.entries()) {
    report.classes.emplace_back(dest.name, ClassCounters{});
    const fs::path dir = out_dir / dest.name;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      try {
        known[static_cast<std::size_t>(dest.index)].insert(difference_hash(read_image(entry.path())));
      } catch (const ImageLoadError&) {
        // Pre-existing junk is left alone; scan_directory reports it.
      }
    }
  }

  // Fetch with a bounded pool; results land in input order.
  std::vector<FetchResult> fetched(urls.rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < urls.rows.size(); i = next++) {
      try {
        fetched[i] = options.fetcher(urls.rows[i].url);
      } catch (const std::exception& e) {
        fetched[i] = FetchResult{false, {}, e.what()};
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(urls.rows.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < urls.rows.size(); ++i) {
    const UrlRow& row = urls.rows[i];
    const auto label = labels.find(row.destination);
    if (!label) throw UnknownClassError(fmt::format("class \"{}\" is not in the label map", row.destination));
    ClassCounters& counters = report.classes[static_cast<std::size_t>(*label)].second;
    FetchResult& got = fetched[i];
    if (!got.ok) {
      ++counters.failed;
      report.failures.push_back(fmt::format("{}: {}", row.url, got.error));
      continue;
    }
    ++counters.downloaded;
    Image image;
    try {
      image = decode_image(got.bytes, row.url);
    } catch (const ImageLoadError& e) {
      ++counters.rejected_undecodable;
      report.failures.push_back(fmt::format("{}: {}", row.url, e.what()));
      continue;
    }
    got.bytes.clear();
    const Image resized = resize_short_side(image, options.short_side);
    const std::uint64_t hash = difference_hash(resized);
    if (!known[static_cast<std::size_t>(*label)].insert(hash).second) {
      ++counters.rejected_duplicate;
      continue;
    }
    write_image(resized, out_dir / row.destination / (hash_hex(hash) + ".png"));
    ++counters.stored;
  }

  std::ofstream out(out_dir / kReportFile, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", (out_dir / kReportFile).string()));
  out << report.to_json();
  return report;
}

}  // namespace movietour
