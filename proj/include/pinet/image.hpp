#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pinet {

/// Row-major 8-bit raster. Masks hold 0/1; gray images hold intensities.
template <typename Tag>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  std::uint8_t at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
  bool inside(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }

  std::size_t count_nonzero() const {
    std::size_t n = 0;
    for (auto p : pixels) n += p != 0;
    return n;
  }
  bool operator==(const Raster&) const = default;
};

struct MaskTag {};
struct GrayTag {};
using MaskImage = Raster<MaskTag>;
using GrayImage = Raster<GrayTag>;

struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
};

/// Binary PGM (P5, maxval 255). Masks are written as 0/255.
void write_pgm(const MaskImage& mask, const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
/// Reads a P5 file and binarizes (nonzero -> 1). Throws FormatError on
/// truncated or malformed files.
MaskImage read_mask_pgm(const std::filesystem::path& path);

/// Any nonzero pixel on the outermost rows/columns.
bool touches_border(const MaskImage& mask);

}  // namespace pinet
