#include "pinet/occlusion.hpp"

#include <cmath>

#include "pinet/error.hpp"

namespace pinet {

bool on_boundary(const MaskImage& mask, Pixel p) {
  if (!mask.inside(p.u, p.v) || !mask.at(p.u, p.v)) return false;
  const int du[4] = {1, -1, 0, 0}, dv[4] = {0, 0, 1, -1};
  for (int k = 0; k < 4; ++k) {
    const int u = p.u + du[k], v = p.v + dv[k];
    if (!mask.inside(u, v) || !mask.at(u, v)) return true;
  }
  return false;
}

std::vector<Pixel> boundary_points(const MaskImage& mask) {
  std::vector<Pixel> out;
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (on_boundary(mask, {u, v})) out.push_back({u, v});
    }
  }
  if (out.empty()) throw EmptyMask("boundary_points: mask is empty");
  return out;
}

MaskImage apply_occlusion(const MaskImage& mask, const OcclusionSpec& spec) {
  if (!(spec.radius >= 1.0)) throw InvalidArgument("occlusion radius must be >= 1");
  if (!on_boundary(mask, spec.center)) throw InvalidArgument("occlusion center is not on the mask boundary");
  MaskImage out = mask;
  const double r2 = spec.radius * spec.radius;
  const int reach = static_cast<int>(std::floor(spec.radius));
  for (int v = std::max(0, spec.center.v - reach); v <= std::min(mask.height - 1, spec.center.v + reach); ++v) {
    for (int u = std::max(0, spec.center.u - reach); u <= std::min(mask.width - 1, spec.center.u + reach); ++u) {
      const double du = u - spec.center.u, dv = v - spec.center.v;
      if (du * du + dv * dv <= r2) out.at(u, v) = 0;
    }
  }
  return out;
}

OcclusionSpec boundary_occlusion(const MaskImage& mask, double radius, Rng& rng) {
  if (!(radius >= 1.0)) throw InvalidArgument("occlusion radius must be >= 1");
  const std::vector<Pixel> boundary = boundary_points(mask);
  OcclusionSpec spec;
  spec.radius = radius;
  spec.boundary_index = std::min<std::size_t>(
      static_cast<std::size_t>(uniform01(rng) * static_cast<double>(boundary.size())), boundary.size() - 1);
  spec.center = boundary[spec.boundary_index];
  return spec;
}

OcclusionSpec random_occlusion(const MaskImage& mask, double max_radius, Rng& rng) {
  if (!(max_radius >= 1.0)) throw InvalidArgument("max occlusion radius must be >= 1");
  const double radius = uniform(rng, 1.0, max_radius);
  return boundary_occlusion(mask, radius, rng);
}

double occlusion_amount(const MaskImage& original, const MaskImage& occluded) {
  if (original.width != occluded.width || original.height != occluded.height) {
    throw InvalidArgument("occlusion_amount: image sizes differ");
  }
  std::size_t total = 0, kept = 0;
  for (std::size_t i = 0; i < original.pixels.size(); ++i) {
    if (occluded.pixels[i] && !original.pixels[i]) {
      throw InvalidArgument("occlusion_amount: occluded mask is not a subset of the original");
    }
    total += original.pixels[i] != 0;
    kept += occluded.pixels[i] != 0;
  }
  if (total == 0) throw EmptyMask("occlusion_amount: original mask is empty");
  return static_cast<double>(total - kept) / static_cast<double>(total);
}

}  // namespace pinet
