#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "pinet/image.hpp"
#include "pinet/mesh.hpp"
#include "pinet/pose.hpp"
#include "pinet/random.hpp"

namespace pinet {

/// Pinhole model. Pixel (u, v) covers [u, u+1) x [v, v+1); its center is at
/// (u + 0.5, v + 0.5) in the continuous image coordinates produced by
/// project_point.
struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const;
  /// Same camera resampled to a w x h raster.
  CameraIntrinsics scaled(int w, int h) const;
  bool operator==(const CameraIntrinsics&) const = default;
};

struct PoseSamplerConfig {
  double z_min = 0.6;
  double z_max = 1.2;
  double lateral_margin = 0.15;  // fraction of width/height kept clear for the center
  int min_pixels = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// (fx x/z + cx, fy y/z + cy); throws BehindCamera for z <= 0.
Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& p);

/// Sets every pixel whose center is inside the projection of a triangle
/// (top-left fill rule on edges). Throws BehindCamera if any transformed
/// vertex has z <= 1e-6; there is no clipping.
MaskImage rasterize_silhouette(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k);

/// Rasterizes one already-projected triangle into mask (OR).
void rasterize_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, MaskImage& mask);

/// Flat two-sided Lambertian shading with a z-buffer. Covered pixels get
/// round(255 (ambient + (1 - ambient)|n.l|)) so they are never zero;
/// background is 0. light_dir points from the surface toward the light.
GrayImage render_shaded(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k,
                        const Eigen::Vector3d& light_dir = Eigen::Vector3d(0, 0, -1));

constexpr double kShadeAmbient = 0.15;
constexpr int kMaxSamplerRejections = 1000;

/// Uniform rotation, uniform depth in [z_min, z_max], object origin uniform
/// over the margin-shrunk image; resampled until the silhouette has at least
/// min_pixels pixels and stays off the border. Throws SamplerExhausted after
/// 1000 consecutive rejections.
Pose sample_pose(const PoseSamplerConfig& cfg, const TriangleMesh& mesh, const CameraIntrinsics& k,
                 Rng& rng);

}  // namespace pinet
