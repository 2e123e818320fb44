#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include "movietour/image.hpp"
#include "movietour/labels.hpp"

namespace movietour {

/// Generator for a stand-in corpus: each class is a fixed (shape, color) pair
/// drawn at a random position and scale, optionally over a textured background.
struct SyntheticSpec {
  int image_size = 64;
  bool textured = true;
  /// Per-channel color jitter amplitude (0..255).
  int color_jitter = 24;
};

inline constexpr int kSyntheticShapes = 7;

Image render_synthetic(int class_index, std::mt19937_64& rng, const SyntheticSpec& spec);

/// Writes `per_class` PNGs for every class into root/<class name>/NNNN.png.
/// Images within a class are regenerated until their difference hashes are
/// distinct, so a later scan keeps every file. Returns the number written.
std::size_t write_synthetic_corpus(const std::filesystem::path& root, const LabelMap& labels, std::size_t per_class,
                                   std::uint64_t seed, const SyntheticSpec& spec = {});

}  // namespace movietour
