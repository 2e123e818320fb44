#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace movietour {

/// 8-bit RGB, interleaved, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Float image with an arbitrary channel count, interleaved.
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;
};

enum class ImageFormat { kUnknown, kPng, kJpeg };

/// Format by magic bytes. Only PNG and JPEG are accepted.
ImageFormat sniff_format(std::string_view bytes);

/// Throws ImageLoadError (tagged with `origin`) for unsupported or corrupt data.
Image decode_image(std::string_view bytes, const std::string& origin = "<memory>");
Image read_image(const std::filesystem::path& path);

std::string encode_png(const Image& image);
std::string encode_jpeg(const Image& image, int quality = 95);
void write_image(const Image& image, const std::filesystem::path& path);

FloatImage to_float(const Image& image);
Image to_u8(const FloatImage& image);

/// Largest centered square; the offset is floored on odd differences.
Image center_crop_square(const Image& image);

/// Bilinear resampling with half-pixel centers and edge clamping.
FloatImage resize_bilinear(const FloatImage& image, int width, int height);

/// Aspect-preserving resize so that min(width, height) == short_side.
Image resize_short_side(const Image& image, int short_side);

/// 8x8 difference hash: luma, bilinear downscale to 9x8, bit (row*8 + col) set
/// when pixel (col) is brighter than pixel (col + 1).
std::uint64_t difference_hash(const Image& image);

std::string hash_hex(std::uint64_t hash);
std::uint64_t parse_hash_hex(std::string_view hex);

}  // namespace movietour
