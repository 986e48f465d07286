#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pinet {

// Unit quaternion stored as (q0, qx, qy, qz), real part first.
struct Quaternion {
  Eigen::Vector4d coeffs = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);

  Quaternion() = default;
  Quaternion(double q0, double qx, double qy, double qz) : coeffs(q0, qx, qy, qz) {}
  explicit Quaternion(const Eigen::Vector4d& c) : coeffs(c) {}

  double w() const { return coeffs[0]; }
  double x() const { return coeffs[1]; }
  double y() const { return coeffs[2]; }
  double z() const { return coeffs[3]; }
  Eigen::Vector3d vec() const { return coeffs.tail<3>(); }

  double norm() const { return coeffs.norm(); }
  Quaternion operator-() const { return Quaternion(Eigen::Vector4d(-coeffs)); }
  bool operator==(const Quaternion& o) const { return coeffs == o.coeffs; }

  static Quaternion identity() { return {}; }
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // meters, camera frame
  Quaternion orientation;                              // canonical

  static Pose identity() { return {}; }
};

struct AxisAngle {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();  // unit
  double angle = 0.0;                               // radians, (-pi, pi)
};

/// Normalizes q and picks the unique sign representative: q0 > 0, or when
/// q0 == 0 the first nonzero of (qx, qy, qz) positive. Throws InvalidQuaternion
/// when ||q|| <= 1e-12. Idempotent bit for bit.
Quaternion canonicalize(const Quaternion& q);

bool is_canonical(const Quaternion& q, double tol = 1e-9);

/// Hamilton product a * b.
Quaternion multiply(const Quaternion& a, const Quaternion& b);
Quaternion conjugate(const Quaternion& q);

/// Rotation matrix of a unit quaternion; throws InvalidQuaternion when
/// | ||q|| - 1 | > 1e-6.
Eigen::Matrix3d quat_to_rotation(const Quaternion& q);

/// Same formula without the unit check, for any scalar type. Only meaningful
/// for unit q.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 3> rotation_from_coeffs(
    const Eigen::MatrixBase<Derived>& q) {
  using S = typename Derived::Scalar;
  const S w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix<S, 3, 3> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// 4x4 homogeneous transform taking object-frame points to the camera frame.
Eigen::Matrix4d pose_to_matrix(const Pose& pose);
Eigen::Matrix4d inverse_transform(const Eigen::Matrix4d& t);

/// Geodesic angle between the rotations of qa and qb, in degrees, [0, 180].
/// Sign-blind. Throws InvalidQuaternion for non-unit input.
double orientation_angle_deg(const Quaternion& qa, const Quaternion& qb);

Quaternion axis_angle_to_quat(const AxisAngle& aa);
/// Inverse of axis_angle_to_quat for a canonical quaternion. The identity maps
/// to axis (1,0,0), angle 0; q0 == 0 (a half turn) has no representation with
/// angle strictly inside (-pi, pi) and throws RangeError.
AxisAngle quat_to_axis_angle(const Quaternion& q);

/// Applies pose to an object-frame point.
inline Eigen::Vector3d transform_point(const Pose& pose, const Eigen::Vector3d& x) {
  return rotation_from_coeffs(pose.orientation.coeffs) * x + pose.position;
}

}  // namespace pinet
