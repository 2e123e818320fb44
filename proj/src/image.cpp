#include "movietour/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "movietour/errors.hpp"

namespace movietour {

ImageFormat sniff_format(std::string_view bytes) {
  static constexpr unsigned char kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= sizeof(kPng) &&
      std::equal(std::begin(kPng), std::end(kPng), bytes.begin(),
                 [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); })) {
    return ImageFormat::kPng;
  }
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::kJpeg;
  }
  return ImageFormat::kUnknown;
}

Image decode_image(std::string_view bytes, const std::string& origin) {
  if (sniff_format(bytes) == ImageFormat::kUnknown) {
    throw ImageLoadError(origin, fmt::format("{}: not a PNG or JPEG image", origin));
  }
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    bgr.release();
  }
  if (bgr.empty() || bgr.type() != CV_8UC3) {
    throw ImageLoadError(origin, fmt::format("{}: image data could not be decoded", origin));
  }
  Image img;
  img.width = bgr.cols;
  img.height = bgr.rows;
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y, 0) = row[3 * x + 2];
      img.at(x, y, 1) = row[3 * x + 1];
      img.at(x, y, 2) = row[3 * x + 0];
    }
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageLoadError(path.string(), fmt::format("{}: cannot open file", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image(bytes, path.string());
}

namespace {

cv::Mat to_bgr_mat(const Image& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      row[3 * x + 0] = image.at(x, y, 2);
      row[3 * x + 1] = image.at(x, y, 1);
      row[3 * x + 2] = image.at(x, y, 0);
    }
  }
  return bgr;
}

std::string encode_with(const Image& image, const std::string& ext, const std::vector<int>& params) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(ext, to_bgr_mat(image), out, params)) {
    throw IoError(fmt::format("failed to encode {} image", ext));
  }
  return std::string(out.begin(), out.end());
}

}  // namespace

std::string encode_png(const Image& image) { return encode_with(image, ".png", {cv::IMWRITE_PNG_COMPRESSION, 6}); }

std::string encode_jpeg(const Image& image, int quality) {
  return encode_with(image, ".jpg", {cv::IMWRITE_JPEG_QUALITY, quality});
}

void write_image(const Image& image, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const std::string bytes = (ext == ".jpg" || ext == ".jpeg") ? encode_jpeg(image) : encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

FloatImage to_float(const Image& image) {
  FloatImage f{image.width, image.height, 3, std::vector<float>(image.rgb.begin(), image.rgb.end())};
  return f;
}

Image to_u8(const FloatImage& image) {
  if (image.channels != 3) throw DimensionError("to_u8 expects a 3-channel image");
  Image out{image.width, image.height, std::vector<std::uint8_t>(image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(image.pixels[i]), 0L, 255L));
  }
  return out;
}

Image center_crop_square(const Image& image) {
  const int side = std::min(image.width, image.height);
  const int x0 = (image.width - side) / 2;
  const int y0 = (image.height - side) / 2;
  Image out{side, side, std::vector<std::uint8_t>(static_cast<std::size_t>(side) * side * 3)};
  for (int y = 0; y < side; ++y) {
    const auto* src = &image.rgb[(static_cast<std::size_t>(y + y0) * image.width + x0) * 3];
    std::copy(src, src + static_cast<std::size_t>(side) * 3, &out.rgb[static_cast<std::size_t>(y) * side * 3]);
  }
  return out;
}

FloatImage resize_bilinear(const FloatImage& image, int width, int height) {
  if (width <= 0 || height <= 0 || image.width <= 0 || image.height <= 0) {
    throw DimensionError(fmt::format("cannot resize {}x{} to {}x{}", image.width, image.height, width, height));
  }
  const int ch = image.channels;
  FloatImage out{width, height, ch, std::vector<float>(static_cast<std::size_t>(width) * height * ch)};
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  auto coord = [](int dst, double scale, int src_len, int& lo, int& hi, float& frac) {
    double s = (dst + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    lo = static_cast<int>(std::floor(s));
    hi = std::min(lo + 1, src_len - 1);
    frac = static_cast<float>(s - lo);
  };
  for (int y = 0; y < height; ++y) {
    int y0, y1;
    float fy;
    coord(y, sy, image.height, y0, y1, fy);
    for (int x = 0; x < width; ++x) {
      int x0, x1;
      float fx;
      coord(x, sx, image.width, x0, x1, fx);
      for (int c = 0; c < ch; ++c) {
        auto px = [&](int xx, int yy) {
          return image.pixels[(static_cast<std::size_t>(yy) * image.width + xx) * ch + c];
        };
        // v0 + f*(v1 - v0) keeps constant regions exact.
        const float top = px(x0, y0) + fx * (px(x1, y0) - px(x0, y0));
        const float bottom = px(x0, y1) + fx * (px(x1, y1) - px(x0, y1));
        out.pixels[(static_cast<std::size_t>(y) * width + x) * ch + c] = top + fy * (bottom - top);
      }
    }
  }
  return out;
}

Image resize_short_side(const Image& image, int short_side) {
  const int shortest = std::min(image.width, image.height);
  if (shortest == short_side) return image;
  const double scale = static_cast<double>(short_side) / shortest;
  const int w = image.width == shortest ? short_side : std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int h = image.height == shortest ? short_side : std::max(1, static_cast<int>(std::lround(image.height * scale)));
  return to_u8(resize_bilinear(to_float(image), w, h));
}

std::uint64_t difference_hash(const Image& image) {
  FloatImage luma{image.width, image.height, 1, std::vector<float>(static_cast<std::size_t>(image.width) * image.height)};
  for (std::size_t i = 0; i < luma.pixels.size(); ++i) {
    luma.pixels[i] = 0.299f * image.rgb[3 * i] + 0.587f * image.rgb[3 * i + 1] + 0.114f * image.rgb[3 * i + 2];
  }
  const FloatImage small = resize_bilinear(luma, 9, 8);
  std::uint64_t hash = 0;
  for (int row = 0; row < 8; ++row) {
    for (int col = 0; col < 8; ++col) {
      const float left = small.pixels[static_cast<std::size_t>(row) * 9 + col];
      const float right = small.pixels[static_cast<std::size_t>(row) * 9 + col + 1];
      if (left > right) hash |= std::uint64_t{1} << (row * 8 + col);
    }
  }
  return hash;
}

std::string hash_hex(std::uint64_t hash) { return fmt::format("{:016x}", hash); }

std::uint64_t parse_hash_hex(std::string_view hex) {
  if (hex.size() != 16) throw DataError(fmt::format("hash \"{}\" is not 16 hex digits", hex));
  std::uint64_t v = 0;
  for (char c : hex) {
    v <<= 4;
    if (c >= '0' && c <= '9') {
      v |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else if (c >= 'A' && c <= 'F') {
      v |= static_cast<std::uint64_t>(c - 'A' + 10);
    } else {
      throw DataError(fmt::format("hash \"{}\" is not 16 hex digits", hex));
    }
  }
  return v;
}

}  // namespace movietour
