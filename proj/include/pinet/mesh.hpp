#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pinet {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;  // meters, object frame
  std::vector<Eigen::Vector3i> triangles;

  double triangle_area(std::size_t t) const;
  double bbox_diagonal() const;
  /// Throws ValidationError on out-of-range indices, triangles with area
  /// below 1e-12 m^2, or an empty/flat bounding box.
  void validate() const;
};

struct PointCloud {
  Eigen::Matrix3Xd points;  // one object-frame point per column
  std::string mesh_id;
  std::uint64_t seed = 0;
  std::vector<int> source_triangle;  // triangle each point was drawn from

  Eigen::Index size() const { return points.cols(); }
};

/// ASCII OBJ subset: `v x y z` and `f a b c ...` records (1-based, `a/b/c`
/// forms allowed; polygons fan-triangulated). Comments and other record types
/// are skipped. Throws ParseError (with line number) or EmptyMesh.
TriangleMesh parse_obj(std::istream& in);
TriangleMesh load_obj(const std::filesystem::path& path);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Area-weighted uniform surface sample of m >= 4 points; deterministic for
/// fixed seed.
PointCloud sample_surface(const TriangleMesh& mesh, int m, std::uint64_t seed,
                          std::string mesh_id = {});
/// Uses the mesh vertices themselves as the loss cloud.
PointCloud vertex_cloud(const TriangleMesh& mesh, std::string mesh_id = {});

/// Axis-aligned box centered at the origin (12 triangles).
TriangleMesh make_box(const Eigen::Vector3d& size, const Eigen::Vector3d& center = Eigen::Vector3d::Zero());
/// Concatenates meshes (vertex indices rebased).
TriangleMesh merge(const std::vector<TriangleMesh>& parts);

}  // namespace pinet
