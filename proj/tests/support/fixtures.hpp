#pragma once

// Filesystem fixtures shared by unit and acceptance tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include <fmt/format.h>

#include "movietour/corpus.hpp"
#include "movietour/image.hpp"
#include "movietour/labels.hpp"
#include "movietour/synthetic.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Fresh, empty directory under the system temp dir.
inline fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "movietour_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline movietour::Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  movietour::Image img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

/// file:// URL with spaces percent-encoded.
inline std::string file_url(const fs::path& p) {
  std::string url = "file://";
  for (char c : fs::absolute(p).string()) {
    if (c == ' ') {
      url += "%20";
    } else {
      url.push_back(c);
    }
  }
  return url;
}

/// Writes `per_class` distinct synthetic sources per class under src_dir and
/// returns a URL manifest CSV that points at them with file:// URLs.
inline std::string url_fixture(const fs::path& src_dir, const movietour::LabelMap& labels, std::size_t per_class,
                               std::uint64_t seed, int image_size = 128) {
  movietour::SyntheticSpec spec;
  spec.image_size = image_size;
  movietour::write_synthetic_corpus(src_dir, labels, per_class, seed, spec);
  std::string csv = "class,url,license\n";
  for (const auto& d : labels.entries()) {
    for (std::size_t i = 0; i < per_class; ++i) {
      csv += fmt::format("\"{}\",{},CC-BY\n", d.name, file_url(src_dir / d.name / fmt::format("{:04d}.png", i)));
    }
  }
  return csv;
}

/// In-memory batch of synthetic images, `per_class` per class, class-major.
inline movietour::Batch synthetic_batch(std::size_t classes, std::size_t per_class, std::uint64_t seed, int input_size,
                                        bool textured = true) {
  movietour::SyntheticSpec spec;
  spec.image_size = 2 * input_size;
  spec.textured = textured;
  std::mt19937_64 rng(seed);
  const auto s = static_cast<std::size_t>(input_size);
  movietour::Batch out{movietour::Tensor<float>({classes * per_class, 3, s, s}), {}};
  const std::size_t per = 3 * s * s;
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      const auto t = movietour::image_to_tensor(movietour::render_synthetic(static_cast<int>(c), rng, spec), input_size);
      std::copy(t.data().begin(), t.data().end(), out.images.data().begin() + row * per);
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace fixture
