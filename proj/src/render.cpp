#include "pinet/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pinet/error.hpp"

namespace pinet {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ValidationError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("intrinsics: image size must be positive");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw ValidationError("intrinsics: principal point must lie inside the image");
  }
}

CameraIntrinsics CameraIntrinsics::scaled(int w, int h) const {
  const double sx = static_cast<double>(w) / width;
  const double sy = static_cast<double>(h) / height;
  return {fx * sx, fy * sy, cx * sx, cy * sy, w, h};
}

void PoseSamplerConfig::validate() const {
  if (!(z_min > 0.0 && z_min <= z_max)) throw ValidationError("sampler: need 0 < z_min <= z_max");
  if (!(lateral_margin >= 0.0 && lateral_margin < 0.5)) {
    throw ValidationError("sampler: lateral margin must be in [0, 0.5)");
  }
  if (min_pixels < 1) throw ValidationError("sampler: min pixel count must be >= 1");
}

Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& p) {
  if (!(p.z() > 0.0)) throw BehindCamera("project_point: point is behind the camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

namespace {

constexpr double kMinDepth = 1e-6;

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

// Tie-break for centers exactly on an edge. Antisymmetric in the edge
// direction, so a shared edge belongs to exactly one of its two triangles.
bool top_left(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

bool covers(double w, bool tl) { return w > 0.0 || (w == 0.0 && tl); }

struct Projected {
  std::vector<Eigen::Vector3d> cam;
  std::vector<Eigen::Vector2d> px;
};

Projected project_mesh(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k) {
  k.validate();
  const Eigen::Matrix3d r = quat_to_rotation(pose.orientation);
  Projected out;
  out.cam.reserve(mesh.vertices.size());
  out.px.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    const Eigen::Vector3d c = r * v + pose.position;
    if (!(c.z() > kMinDepth)) throw BehindCamera("mesh vertex behind the camera");
    out.cam.push_back(c);
    out.px.push_back(project_point(k, c));
  }
  return out;
}

// Calls fn(u, v, w0, w1, w2, area2) for every covered pixel center, with the
// triangle reordered so area2 > 0. Degenerate projections cover nothing.
template <typename Fn>
void scan_triangle(Eigen::Vector2d a, Eigen::Vector2d b, Eigen::Vector2d c, int width, int height,
                   bool& swapped, Fn&& fn) {
  double area2 = edge(a, b, c.x(), c.y());
  swapped = false;
  if (area2 == 0.0 || !std::isfinite(area2)) return;
  if (area2 < 0.0) {
    std::swap(b, c);
    area2 = -area2;
    swapped = true;
  }
  const double min_x = std::min({a.x(), b.x(), c.x()}), max_x = std::max({a.x(), b.x(), c.x()});
  const double min_y = std::min({a.y(), b.y(), c.y()}), max_y = std::max({a.y(), b.y(), c.y()});
  const int u0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
  const int u1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
  const int v0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
  const int v1 = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));
  const bool tl0 = top_left(b, c), tl1 = top_left(c, a), tl2 = top_left(a, b);
  for (int v = v0; v <= v1; ++v) {
    const double py = v + 0.5;
    for (int u = u0; u <= u1; ++u) {
      const double px = u + 0.5;
      // wk is opposite vertex k.
      const double w0 = edge(b, c, px, py);
      const double w1 = edge(c, a, px, py);
      const double w2 = edge(a, b, px, py);
      if (covers(w0, tl0) && covers(w1, tl1) && covers(w2, tl2)) fn(u, v, w0, w1, w2, area2);
    }
  }
}

}  // namespace

void rasterize_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                        MaskImage& mask) {
  bool swapped = false;
  scan_triangle(a, b, c, mask.width, mask.height, swapped,
                [&](int u, int v, double, double, double, double) { mask.at(u, v) = 1; });
}

MaskImage rasterize_silhouette(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k) {
  const Projected p = project_mesh(mesh, pose, k);
  MaskImage mask(k.width, k.height);
  for (const auto& f : mesh.triangles) rasterize_triangle(p.px[f[0]], p.px[f[1]], p.px[f[2]], mask);
  return mask;
}

GrayImage render_shaded(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& k,
                        const Eigen::Vector3d& light_dir) {
  const double ln = light_dir.norm();
  if (!(ln > 0.0)) throw InvalidArgument("render_shaded: light direction must be nonzero");
  const Eigen::Vector3d light = light_dir / ln;
  const Projected p = project_mesh(mesh, pose, k);

  GrayImage img(k.width, k.height);
  std::vector<double> inv_depth(img.pixels.size(), 0.0);
  for (const auto& f : mesh.triangles) {
    const Eigen::Vector3d& c0 = p.cam[f[0]];
    const Eigen::Vector3d& c1 = p.cam[f[1]];
    const Eigen::Vector3d& c2 = p.cam[f[2]];
    const Eigen::Vector3d n = (c1 - c0).cross(c2 - c0);
    const double nn = n.norm();
    const double lambert = nn > 0.0 ? std::abs(n.dot(light)) / nn : 0.0;
    const auto shade = static_cast<std::uint8_t>(
        std::lround(255.0 * (kShadeAmbient + (1.0 - kShadeAmbient) * lambert)));
    bool swapped = false;
    double iz[3] = {1.0 / c0.z(), 1.0 / c1.z(), 1.0 / c2.z()};
    scan_triangle(p.px[f[0]], p.px[f[1]], p.px[f[2]], k.width, k.height, swapped,
                  [&](int u, int v, double w0, double w1, double w2, double area2) {
                    // Barycentrics weight the (possibly swapped) vertex order.
                    const double z1 = swapped ? iz[2] : iz[1];
                    const double z2 = swapped ? iz[1] : iz[2];
                    const double d = (w0 * iz[0] + w1 * z1 + w2 * z2) / area2;
                    const std::size_t idx = static_cast<std::size_t>(v) * k.width + u;
                    if (img.pixels[idx] == 0 || d > inv_depth[idx]) {
                      inv_depth[idx] = d;
                      img.pixels[idx] = shade;
                    }
                  });
  }
  return img;
}

Pose sample_pose(const PoseSamplerConfig& cfg, const TriangleMesh& mesh, const CameraIntrinsics& k,
                 Rng& rng) {
  cfg.validate();
  k.validate();
  const double u_lo = cfg.lateral_margin * k.width, u_hi = (1.0 - cfg.lateral_margin) * k.width;
  const double v_lo = cfg.lateral_margin * k.height, v_hi = (1.0 - cfg.lateral_margin) * k.height;
  for (int attempt = 0; attempt < kMaxSamplerRejections; ++attempt) {
    Pose pose;
    pose.orientation = uniform_quaternion(rng);
    const double z = uniform(rng, cfg.z_min, cfg.z_max);
    const double u = uniform(rng, u_lo, u_hi);
    const double v = uniform(rng, v_lo, v_hi);
    pose.position = {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
    MaskImage mask;
    try {
      mask = rasterize_silhouette(mesh, pose, k);
    } catch (const BehindCamera&) {
      continue;
    }
    if (mask.count_nonzero() >= static_cast<std::size_t>(cfg.min_pixels) && !touches_border(mask)) {
      return pose;
    }
  }
  throw SamplerExhausted("sample_pose: " + std::to_string(kMaxSamplerRejections) +
                         " consecutive rejections; sampler config is infeasible for this mesh");
}

}  // namespace pinet
