#include "movietour/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "movietour/errors.hpp"

namespace movietour {

namespace {

constexpr std::array<std::array<int, 3>, 14> kPalette = {{
    {220, 40, 40},   {40, 200, 60},  {50, 80, 230},   {235, 210, 40}, {200, 60, 210}, {40, 210, 210},
    {245, 140, 30},  {130, 70, 30},  {250, 250, 250}, {20, 20, 20},   {150, 220, 90}, {240, 130, 170},
    {90, 40, 150},   {120, 120, 120},
}};

// Signed inside test in unit coordinates centered on the shape.
bool inside(int shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case 0:  // disc
      return u * u + v * v <= 1.0;
    case 1:  // square
      return au <= 0.8 && av <= 0.8;
    case 2:  // triangle, apex up
      return v <= 0.85 && v >= -0.85 && au <= (v + 0.85) / 1.7 * 0.95;
    case 3:  // plus
      return (au <= 0.28 && av <= 1.0) || (av <= 0.28 && au <= 1.0);
    case 4: {  // ring
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.4;
    }
    case 5:  // diamond
      return au + av <= 1.0;
    case 6:  // horizontal bar
      return au <= 1.0 && av <= 0.3;
    default:
      return false;
  }
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Image render_synthetic(int class_index, std::mt19937_64& rng, const SyntheticSpec& spec) {
  if (class_index < 0) throw ConfigError("class index must be non-negative");
  const int n = spec.image_size;
  if (n < 8) throw ConfigError("synthetic images must be at least 8 pixels");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  Image img{n, n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n * 3)};

  // Background: a muted base tone plus, when textured, a coarse random grid of
  // patches and fine per-pixel grain.
  std::array<double, 3> base{};
  for (auto& b : base) b = spec.textured ? 60.0 + 80.0 * unit(rng) : 110.0;
  const int cells = 4;
  std::vector<double> patch(static_cast<std::size_t>(cells + 1) * (cells + 1) * 3);
  for (auto& p : patch) p = spec.textured ? 40.0 * noise(rng) : 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double gx = static_cast<double>(x) / n * cells, gy = static_cast<double>(y) / n * cells;
      const int cx = static_cast<int>(gx), cy = static_cast<int>(gy);
      const double fx = gx - cx, fy = gy - cy;
      for (int c = 0; c < 3; ++c) {
        auto p = [&](int px, int py) { return patch[(static_cast<std::size_t>(py) * (cells + 1) + px) * 3 + c]; };
        const double smooth = (1 - fy) * ((1 - fx) * p(cx, cy) + fx * p(cx + 1, cy)) +
                              fy * ((1 - fx) * p(cx, cy + 1) + fx * p(cx + 1, cy + 1));
        const double grain = spec.textured ? 12.0 * noise(rng) : 0.0;
        img.at(x, y, c) = clamp_u8(base[c] + smooth + grain);
      }
    }
  }

  const int shape = class_index % kSyntheticShapes;
  const auto& color = kPalette[static_cast<std::size_t>(class_index) % kPalette.size()];
  std::array<double, 3> tint{};
  for (int c = 0; c < 3; ++c) tint[c] = color[c] + spec.color_jitter * (2.0 * unit(rng) - 1.0);
  const double radius = n * (0.22 + 0.12 * unit(rng));
  const double cx = n / 2.0 + (unit(rng) - 0.5) * (n - 2 * radius) * 0.8;
  const double cy = n / 2.0 + (unit(rng) - 0.5) * (n - 2 * radius) * 0.8;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5 - cx) / radius, v = (cy - (y + 0.5)) / radius;
      if (!inside(shape, u, v)) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(tint[c] + (spec.textured ? 6.0 * noise(rng) : 0.0));
    }
  }
  return img;
}

std::size_t write_synthetic_corpus(const std::filesystem::path& root, const LabelMap& labels, std::size_t per_class,
                                   std::uint64_t seed, const SyntheticSpec& spec) {
  std::error_code ec;
  std::size_t written = 0;
  for (const auto& dest : labels.entries()) {
    const auto dir = root / dest.name;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(dest.index)};
    std::mt19937_64 rng(seq);
    std::set<std::uint64_t> hashes;
    for (std::size_t i = 0; i < per_class; ++i) {
      Image img;
      int attempts = 0;
      do {
        if (++attempts > 1000) {
          throw DataError(fmt::format("could not generate {} distinct images for class \"{}\"", per_class, dest.name));
        }
        img = render_synthetic(dest.index, rng, spec);
      } while (!hashes.insert(difference_hash(img)).second);
      write_image(img, dir / fmt::format("{:04d}.png", i));
      ++written;
    }
  }
  return written;
}

}  // namespace movietour
