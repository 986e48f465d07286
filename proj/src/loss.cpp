#include "pinet/loss.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "pinet/error.hpp"
#include "pinet/random.hpp"

namespace pinet {

LossKind parse_loss_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "l1") return LossKind::L1;
  if (s == "l2" || s == "posecnn") return LossKind::L2;
  if (s == "l3" || s == "pointcloud") return LossKind::L3;
  if (s == "l4" || s == "pointcloud_penalized") return LossKind::L4;
  throw ConfigError("unknown loss '" + std::string(name) + "' (expected l1, l2, l3 or l4)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::L1: return "l1";
    case LossKind::L2: return "l2";
    case LossKind::L3: return "l3";
    case LossKind::L4: return "l4";
  }
  return "?";
}

namespace {

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

struct Normalized {
  Eigen::Vector4d q;
  double norm;
};

Normalized normalize_raw(const Eigen::Vector4d& raw) {
  const double n = raw.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) throw InvalidQuaternion("predicted quaternion has zero norm");
  return {raw / n, n};
}

// Pulls a gradient w.r.t. the normalized quaternion back to the raw one.
Eigen::Vector4d through_normalization(const Normalized& n, const Eigen::Vector4d& d_unit) {
  return (d_unit - n.q * n.q.dot(d_unit)) / n.norm;
}

// sum_jk g(j,k) dR(q)_jk / dq for the rotation_from_coeffs formula.
Eigen::Vector4d rotation_vjp(const Eigen::Vector4d& q, const Eigen::Matrix3d& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Vector4d d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
              w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
              z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
              x * g(2, 0) + y * g(2, 1));
  return d;
}

struct PositionL1 {
  double value;
  Eigen::Vector3d grad;
};

PositionL1 position_l1(const Eigen::Vector3d& pred, const Eigen::Vector3d& target) {
  const Eigen::Vector3d d = pred - target;
  return {d.cwiseAbs().sum(), d.unaryExpr([](double v) { return sgn(v); })};
}

}  // namespace

LossValueGrad loss_l1(const RawPose& pred, const Pose& target, const LossWeights& w) {
  const Normalized n = normalize_raw(pred.raw_quaternion);
  const PositionL1 pos = position_l1(pred.position, target.position);
  const Eigen::Vector4d dq = n.q - target.orientation.coeffs;
  LossValueGrad out;
  out.value = pos.value + w.alpha * dq.cwiseAbs().sum();
  out.d_position = pos.grad;
  out.d_raw_quaternion =
      through_normalization(n, w.alpha * dq.unaryExpr([](double v) { return sgn(v); }));
  return out;
}

LossValueGrad loss_posecnn(const RawPose& pred, const Pose& target, const LossWeights& w) {
  const Normalized n = normalize_raw(pred.raw_quaternion);
  const PositionL1 pos = position_l1(pred.position, target.position);
  LossValueGrad out;
  out.value = pos.value + w.alpha * (1.0 - n.q.dot(target.orientation.coeffs));
  out.d_position = pos.grad;
  out.d_raw_quaternion = through_normalization(n, -w.alpha * target.orientation.coeffs);
  return out;
}

LossValueGrad loss_pointcloud(const RawPose& pred, const Pose& target, const Eigen::Matrix3Xd& cloud,
                              PointReduction reduction) {
  if (cloud.cols() == 0) throw InvalidArgument("loss_pointcloud: empty point cloud");
  const Normalized n = normalize_raw(pred.raw_quaternion);
  const Eigen::Matrix3d r_pred = rotation_from_coeffs(n.q);
  const Eigen::Matrix3d r_target = rotation_from_coeffs(target.orientation.coeffs);
  const Eigen::Vector3d dp = pred.position - target.position;

  // H(p_hat, q_hat) x - H(p, q) x for every point.
  Eigen::Matrix3Xd diff = (r_pred - r_target) * cloud;
  diff.colwise() += dp;
  const Eigen::Matrix3Xd sign = diff.unaryExpr([](double v) { return sgn(v); });
  const double scale = reduction == PointReduction::Mean ? 1.0 / static_cast<double>(cloud.cols()) : 1.0;

  LossValueGrad out;
  out.value = scale * diff.cwiseAbs().sum();
  out.d_position = scale * sign.rowwise().sum();
  const Eigen::Matrix3d g = scale * (sign * cloud.transpose());
  out.d_raw_quaternion = through_normalization(n, rotation_vjp(n.q, g));
  return out;
}

LossValueGrad loss_pointcloud_penalized(const RawPose& pred, const Pose& target,
                                        const Eigen::Matrix3Xd& cloud, PointReduction reduction) {
  LossValueGrad out = loss_pointcloud(pred, target, cloud, reduction);
  const Normalized n = normalize_raw(pred.raw_quaternion);
  if (n.q[0] < 0.0) {
    out.value += -n.q[0];
    out.d_raw_quaternion += through_normalization(n, Eigen::Vector4d(-1.0, 0.0, 0.0, 0.0));
  }
  return out;
}

LossValueGrad evaluate_loss(LossKind kind, const RawPose& pred, const Pose& target,
                            const Eigen::Matrix3Xd* cloud, const LossOptions& opts) {
  if (uses_cloud(kind) && cloud == nullptr) {
    throw InvalidArgument(to_string(kind) + " needs a point cloud");
  }
  switch (kind) {
    case LossKind::L1: return loss_l1(pred, target, opts.weights);
    case LossKind::L2: return loss_posecnn(pred, target, opts.weights);
    case LossKind::L3: return loss_pointcloud(pred, target, *cloud, opts.reduction);
    case LossKind::L4: return loss_pointcloud_penalized(pred, target, *cloud, opts.reduction);
  }
  throw InvalidArgument("unknown loss kind");
}

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kKinkMargin = 1e-4;
constexpr double kPenaltyKinkMargin = 1e-5;
constexpr int kGradcheckPoints = 50;

struct Trial {
  RawPose pred;
  Pose target;
  Eigen::Matrix3Xd cloud;
};

Trial random_trial(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Trial t;
  t.target.orientation = uniform_quaternion(rng);
  t.target.position = {uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, 0.5, 1.5)};
  t.pred.position = t.target.position + Eigen::Vector3d(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1),
                                                        uniform(rng, -0.1, 0.1));
  Eigen::Vector4d raw;
  do {
    raw = {normal(rng), normal(rng), normal(rng), normal(rng)};
  } while (raw.norm() < 0.1);
  t.pred.raw_quaternion = raw.normalized() * uniform(rng, 0.5, 2.0);
  t.cloud.resize(3, kGradcheckPoints);
  for (int i = 0; i < kGradcheckPoints; ++i) {
    t.cloud.col(i) = Eigen::Vector3d(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
  }
  return t;
}

bool near_kink(LossKind kind, const Trial& t) {
  const Eigen::Vector4d q = t.pred.raw_quaternion.normalized();
  const Eigen::Vector3d dp = t.pred.position - t.target.position;
  if (dp.cwiseAbs().minCoeff() < kKinkMargin) return true;
  switch (kind) {
    case LossKind::L1: return (q - t.target.orientation.coeffs).cwiseAbs().minCoeff() < kKinkMargin;
    case LossKind::L2: return false;
    case LossKind::L3:
    case LossKind::L4: {
      Eigen::Matrix3Xd diff = (rotation_from_coeffs(q) - rotation_from_coeffs(t.target.orientation.coeffs)) * t.cloud;
      diff.colwise() += dp;
      if (diff.cwiseAbs().minCoeff() < kKinkMargin) return true;
      return kind == LossKind::L4 && std::abs(q[0]) < kPenaltyKinkMargin;
    }
  }
  return false;
}

}  // namespace

GradcheckReport gradcheck(LossKind kind, int trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidArgument("gradcheck: trials must be >= 1");
  Rng rng(seed);
  GradcheckReport report;
  const LossOptions opts;
  for (int done = 0; done < trials;) {
    Trial t = random_trial(rng);
    if (near_kink(kind, t)) {
      ++report.resampled;
      continue;
    }
    const LossValueGrad g = evaluate_loss(kind, t.pred, t.target, &t.cloud, opts);
    Eigen::Matrix<double, 7, 1> analytic, numeric;
    analytic << g.d_position, g.d_raw_quaternion;
    for (int i = 0; i < 7; ++i) {
      RawPose plus = t.pred, minus = t.pred;
      if (i < 3) {
        plus.position[i] += kFdStep;
        minus.position[i] -= kFdStep;
      } else {
        plus.raw_quaternion[i - 3] += kFdStep;
        minus.raw_quaternion[i - 3] -= kFdStep;
      }
      numeric[i] = (evaluate_loss(kind, plus, t.target, &t.cloud, opts).value -
                    evaluate_loss(kind, minus, t.target, &t.cloud, opts).value) /
                   (2.0 * kFdStep);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    report.max_relative_error = std::max(report.max_relative_error, (analytic - numeric).norm() / denom);
    ++done;
    ++report.trials;
  }
  return report;
}

}  // namespace pinet
