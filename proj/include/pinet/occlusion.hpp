#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pinet/image.hpp"
#include "pinet/random.hpp"

namespace pinet {

struct OcclusionSpec {
  Pixel center;
  double radius = 1.0;  // pixels, >= 1
  std::size_t boundary_index = 0;  // index into boundary_points(original)
  std::uint64_t seed = 0;
};

/// Set pixels with at least one unset 4-neighbor; the image border counts as
/// unset. Row-major order. Throws EmptyMask.
std::vector<Pixel> boundary_points(const MaskImage& mask);

bool on_boundary(const MaskImage& mask, Pixel p);

/// Clears every pixel within Euclidean distance <= radius of the center.
/// Throws InvalidArgument if radius < 1 or the center is not a boundary pixel.
MaskImage apply_occlusion(const MaskImage& mask, const OcclusionSpec& spec);

/// Fixed radius, center uniform over the boundary.
OcclusionSpec boundary_occlusion(const MaskImage& mask, double radius, Rng& rng);

/// Radius uniform in [1, max_radius], center uniform over the boundary.
OcclusionSpec random_occlusion(const MaskImage& mask, double max_radius, Rng& rng);

/// (|original| - |occluded|) / |original|. Throws EmptyMask or InvalidArgument
/// (occluded not a subset of original, or size mismatch).
double occlusion_amount(const MaskImage& original, const MaskImage& occluded);

/// Occlusion radius scaled from a reference image width to the working width
/// (24 px at 320 wide becomes 6 px at 80 wide).
inline double scale_radius(double radius, int reference_width, int width) {
  return radius * static_cast<double>(width) / static_cast<double>(reference_width);
}

}  // namespace pinet
