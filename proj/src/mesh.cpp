#include "pinet/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pinet/error.hpp"
#include "pinet/random.hpp"

namespace pinet {

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& f = triangles[t];
  const Eigen::Vector3d e1 = vertices[f[1]] - vertices[f[0]];
  const Eigen::Vector3d e2 = vertices[f[2]] - vertices[f[0]];
  return 0.5 * e1.cross(e2).norm();
}

double TriangleMesh::bbox_diagonal() const {
  if (vertices.empty()) return 0.0;
  Eigen::Vector3d lo = vertices.front(), hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

void TriangleMesh::validate() const {
  if (triangles.empty()) throw EmptyMesh("mesh has no faces");
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      if (triangles[t][k] < 0 || triangles[t][k] >= n) {
        throw ValidationError("triangle " + std::to_string(t) + " index out of range");
      }
    }
    if (!(triangle_area(t) >= 1e-12)) {
      throw ValidationError("triangle " + std::to_string(t) + " is degenerate");
    }
  }
  if (!(bbox_diagonal() > 0.0)) throw ValidationError("mesh bounding box is empty");
}

namespace {

int parse_index(const std::string& token, int vertex_count, int line) {
  const std::string head = token.substr(0, token.find('/'));
  std::size_t used = 0;
  long idx = 0;
  try {
    idx = std::stol(head, &used);
  } catch (const std::exception&) {
    throw ParseError("bad face index '" + token + "'", line);
  }
  if (used != head.size()) throw ParseError("bad face index '" + token + "'", line);
  if (idx <= 0) throw ParseError("non-positive face index " + head, line);
  if (idx > vertex_count) {
    throw ParseError("face index " + head + " out of range (" + std::to_string(vertex_count) +
                         " vertices)",
                     line);
  }
  return static_cast<int>(idx - 1);
}

}  // namespace

TriangleMesh parse_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ls >> v.x() >> v.y() >> v.z()) || !v.allFinite()) {
        throw ParseError("malformed vertex record", line);
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        poly.push_back(parse_index(tok, static_cast<int>(mesh.vertices.size()), line));
      }
      if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", line);
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.triangles.emplace_back(poly[0], poly[k], poly[k + 1]);
      }
    }
    // vn, vt, usemtl, o, g, s, ... carry nothing a silhouette needs.
  }
  if (mesh.triangles.empty()) throw EmptyMesh("OBJ contains no faces");
  mesh.validate();
  return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mesh file " + path.string());
  try {
    return parse_obj(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.triangles) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

PointCloud sample_surface(const TriangleMesh& mesh, int m, std::uint64_t seed,
                          std::string mesh_id) {
  if (m < 4) throw InvalidArgument("sample_surface: need at least 4 points");
  mesh.validate();
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.resize(3, m);
  cloud.source_triangle.resize(m);
  cloud.mesh_id = std::move(mesh_id);
  cloud.seed = seed;
  for (int i = 0; i < m; ++i) {
    const double pick = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t t =
        std::min<std::size_t>(it - cumulative.begin(), mesh.triangles.size() - 1);
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const auto& f = mesh.triangles[t];
    cloud.points.col(i) = (1.0 - r1) * mesh.vertices[f[0]] + r1 * (1.0 - r2) * mesh.vertices[f[1]] +
                          r1 * r2 * mesh.vertices[f[2]];
    cloud.source_triangle[i] = static_cast<int>(t);
  }
  return cloud;
}

PointCloud vertex_cloud(const TriangleMesh& mesh, std::string mesh_id) {
  mesh.validate();
  if (mesh.vertices.size() < 4) throw InvalidArgument("vertex_cloud: need at least 4 vertices");
  PointCloud cloud;
  cloud.points.resize(3, static_cast<Eigen::Index>(mesh.vertices.size()));
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) cloud.points.col(i) = mesh.vertices[i];
  cloud.mesh_id = std::move(mesh_id);
  cloud.source_triangle.assign(mesh.vertices.size(), -1);
  return cloud;
}

TriangleMesh make_box(const Eigen::Vector3d& size, const Eigen::Vector3d& center) {
  TriangleMesh mesh;
  const Eigen::Vector3d h = 0.5 * size;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back(center.x() + ((i & 1) ? h.x() : -h.x()),
                               center.y() + ((i & 2) ? h.y() : -h.y()),
                               center.z() + ((i & 4) ? h.z() : -h.z()));
  }
  // Outward-facing quads, counter-clockwise seen from outside.
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& q : quads) {
    mesh.triangles.emplace_back(q[0], q[1], q[2]);
    mesh.triangles.emplace_back(q[0], q[2], q[3]);
  }
  return mesh;
}

TriangleMesh merge(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const auto& p : parts) {
    const int base = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const auto& f : p.triangles) out.triangles.emplace_back(f.array() + base);
  }
  return out;
}

}  // namespace pinet
