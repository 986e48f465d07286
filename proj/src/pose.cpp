#include "pinet/pose.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pinet/error.hpp"

namespace pinet {

namespace {

constexpr double kUnitTol = 1e-6;

void require_unit(const Quaternion& q, const char* who) {
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTol) {
    throw InvalidQuaternion(std::string(who) + ": quaternion is not unit norm");
  }
}

}  // namespace

Quaternion canonicalize(const Quaternion& q) {
  const double n2 = q.coeffs.squaredNorm();
  if (!std::isfinite(n2) || !(std::sqrt(n2) > 1e-12)) {
    throw InvalidQuaternion("canonicalize: zero-norm quaternion");
  }
  Eigen::Vector4d c = q.coeffs;
  // Already unit up to rounding: leave the bits alone so the map is idempotent.
  if (std::abs(n2 - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) {
    c /= std::sqrt(n2);
  }
  bool flip = c[0] < 0.0;
  if (c[0] == 0.0) {
    for (int i = 1; i < 4; ++i) {
      if (c[i] != 0.0) {
        flip = c[i] < 0.0;
        break;
      }
    }
  }
  if (flip) c = -c;
  if (c[0] == 0.0) c[0] = 0.0;  // drop a -0.0 so both signs of the input agree
  return Quaternion(c);
}

bool is_canonical(const Quaternion& q, double tol) {
  if (!q.coeffs.allFinite() || std::abs(q.norm() - 1.0) > tol) return false;
  if (q.w() > 0.0) return true;
  if (q.w() < 0.0) return false;
  for (int i = 1; i < 4; ++i) {
    if (q.coeffs[i] != 0.0) return q.coeffs[i] > 0.0;
  }
  return false;
}

Quaternion multiply(const Quaternion& a, const Quaternion& b) {
  const double aw = a.w(), ax = a.x(), ay = a.y(), az = a.z();
  const double bw = b.w(), bx = b.x(), by = b.y(), bz = b.z();
  return {aw * bw - ax * bx - ay * by - az * bz, aw * bx + ax * bw + ay * bz - az * by,
          aw * by - ax * bz + ay * bw + az * bx, aw * bz + ax * by - ay * bx + az * bw};
}

Quaternion conjugate(const Quaternion& q) { return {q.w(), -q.x(), -q.y(), -q.z()}; }

Eigen::Matrix3d quat_to_rotation(const Quaternion& q) {
  require_unit(q, "quat_to_rotation");
  return rotation_from_coeffs(q.coeffs);
}

Eigen::Matrix4d pose_to_matrix(const Pose& pose) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = quat_to_rotation(pose.orientation);
  t.topRightCorner<3, 1>() = pose.position;
  return t;
}

Eigen::Matrix4d inverse_transform(const Eigen::Matrix4d& t) {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = t.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * t.topRightCorner<3, 1>();
  return inv;
}

double orientation_angle_deg(const Quaternion& qa, const Quaternion& qb) {
  require_unit(qa, "orientation_angle_deg");
  require_unit(qb, "orientation_angle_deg");
  // 2 acos(|<qa,qb>|) written as 4 atan2(|a - b|, |a + b|) after aligning
  // signs: accurate near 0 and 180 degrees, exactly symmetric, and exactly
  // zero for equal rotations.
  const Eigen::Vector4d& a = qa.coeffs;
  const Eigen::Vector4d b = a.dot(qb.coeffs) < 0.0 ? Eigen::Vector4d(-qb.coeffs) : qb.coeffs;
  const double angle = 4.0 * std::atan2((a - b).norm(), (a + b).norm());
  return std::min(angle * 180.0 / std::numbers::pi, 180.0);
}

Quaternion axis_angle_to_quat(const AxisAngle& aa) {
  if (!(aa.angle > -std::numbers::pi && aa.angle < std::numbers::pi)) {
    throw RangeError("axis_angle_to_quat: angle must lie strictly inside (-pi, pi)");
  }
  const double n = aa.axis.norm();
  if (std::abs(n - 1.0) > 1e-9) {
    throw RangeError("axis_angle_to_quat: axis must be unit length");
  }
  const double half = 0.5 * aa.angle;
  const Eigen::Vector3d v = aa.axis * std::sin(half);
  return canonicalize(Quaternion(std::cos(half), v.x(), v.y(), v.z()));
}

AxisAngle quat_to_axis_angle(const Quaternion& q) {
  require_unit(q, "quat_to_axis_angle");
  const Quaternion c = canonicalize(q);
  if (c.w() == 0.0) {
    throw RangeError("quat_to_axis_angle: half turn has angle pi");
  }
  const Eigen::Vector3d v = c.vec();
  const double s = v.norm();
  if (s == 0.0) return {};
  return {v / s, 2.0 * std::atan2(s, c.w())};
}

}  // namespace pinet
