#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "pinet/pose.hpp"

namespace pinet {

/// Pose losses. L1: L1 on position and quaternion. L2: L1 position plus the
/// PoseCNN orientation term 1 - <q_hat, q>. L3: L1 distance between the object
/// cloud under predicted and target poses. L4: L3 plus max(-q0_hat, 0).
enum class LossKind { L1, L2, L3, L4 };

LossKind parse_loss_kind(std::string_view name);  // "l1".."l4", case-insensitive
std::string to_string(LossKind kind);
inline bool uses_alpha(LossKind k) { return k == LossKind::L1 || k == LossKind::L2; }
inline bool uses_cloud(LossKind k) { return k == LossKind::L3 || k == LossKind::L4; }

/// Point-cloud terms are summed over points by default; Mean divides by m.
enum class PointReduction { Sum, Mean };

struct LossWeights {
  double alpha = 1.0;
};

/// Network output before quaternion normalization.
struct RawPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d raw_quaternion = Eigen::Vector4d(1, 0, 0, 0);  // (q0, qx, qy, qz)
};

struct LossValueGrad {
  double value = 0.0;
  Eigen::Vector3d d_position = Eigen::Vector3d::Zero();
  Eigen::Vector4d d_raw_quaternion = Eigen::Vector4d::Zero();
};

// All losses normalize the raw quaternion internally and differentiate
// through the normalization. Kinks of |.| and max(., 0) take subgradient 0.
// A raw quaternion with norm <= 1e-12 throws InvalidQuaternion.

LossValueGrad loss_l1(const RawPose& pred, const Pose& target, const LossWeights& w = {});
LossValueGrad loss_posecnn(const RawPose& pred, const Pose& target, const LossWeights& w = {});
/// cloud is 3 x m, object frame; throws InvalidArgument if empty.
LossValueGrad loss_pointcloud(const RawPose& pred, const Pose& target, const Eigen::Matrix3Xd& cloud,
                              PointReduction reduction = PointReduction::Sum);
LossValueGrad loss_pointcloud_penalized(const RawPose& pred, const Pose& target,
                                        const Eigen::Matrix3Xd& cloud,
                                        PointReduction reduction = PointReduction::Sum);

struct LossOptions {
  LossWeights weights;
  PointReduction reduction = PointReduction::Sum;
};

/// Dispatch on kind; cloud may be null for L1/L2.
LossValueGrad evaluate_loss(LossKind kind, const RawPose& pred, const Pose& target,
                            const Eigen::Matrix3Xd* cloud, const LossOptions& opts = {});

struct GradcheckReport {
  double max_relative_error = 0.0;
  int trials = 0;
  int resampled = 0;  // configurations rejected for lying too close to a kink
};

/// Analytic gradients against central differences (step 1e-6) on seeded
/// random configurations. Relative error per trial is
/// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||) over the
/// 7 gradient entries. Configurations with any |.| argument within 1e-4 of
/// zero, or (L4) |q0_hat| < 1e-5, are redrawn.
GradcheckReport gradcheck(LossKind kind, int trials, std::uint64_t seed);

}  // namespace pinet
