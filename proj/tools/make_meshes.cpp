// Writes the bundled box-assembly meshes to data/meshes. Each object is
// chiral with unequal arms so no two orientations share a silhouette family,
// and large enough to cover a useful number of pixels at 80x60.
#include <filesystem>
#include <iostream>

#include "pinet/mesh.hpp"

using pinet::make_box;
using pinet::merge;
using V = Eigen::Vector3d;

namespace {

constexpr double kScale = 1.6;

pinet::TriangleMesh box(const V& size, const V& center, const V& origin) {
  return make_box(kScale * size, kScale * (center - origin));
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "data/meshes";
  std::filesystem::create_directories(out);

  // Three orthogonal arms of lengths 0.30, 0.20 and 0.12 m (before scaling).
  const V tripod_origin(0.08, 0.04, 0.02);
  pinet::write_obj(merge({box({0.30, 0.05, 0.05}, {0.125, 0, 0}, tripod_origin),
                          box({0.05, 0.20, 0.05}, {0, 0.1, 0}, tripod_origin),
                          box({0.05, 0.05, 0.12}, {0, 0, 0.06}, tripod_origin)}),
                   out / "tripod.obj");

  // Long bar with an arm up one end and a tab out of the other.
  const V bracket_origin(0.02, 0.03, 0.01);
  pinet::write_obj(merge({box({0.34, 0.09, 0.06}, {0, 0, 0}, bracket_origin),
                          box({0.07, 0.17, 0.06}, {0.135, 0.13, 0}, bracket_origin),
                          box({0.06, 0.06, 0.12}, {-0.14, 0, 0.09}, bracket_origin)}),
                   out / "bracket.obj");

  // Two unequal bars at a right angle plus a stub.
  const V elbow_origin(0.0, 0.02, 0.03);
  pinet::write_obj(merge({box({0.26, 0.07, 0.07}, {0.03, 0, 0}, elbow_origin),
                          box({0.07, 0.07, 0.20}, {-0.135, 0, 0.065}, elbow_origin),
                          box({0.05, 0.12, 0.05}, {0.13, 0.095, 0}, elbow_origin)}),
                   out / "elbow.obj");

  std::cout << "wrote tripod.obj, bracket.obj, elbow.obj to " << out.string() << "\n";
  return 0;
}
