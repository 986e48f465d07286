#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pinet/error.hpp"
#include "pinet/image.hpp"
#include "pinet/loss.hpp"
#include "pinet/pose.hpp"
#include "pinet/random.hpp"

namespace pinet {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Conv stack (3x3, stride 2, padding 1, ReLU) -> flatten (no global pooling)
/// -> FC(hidden) + ReLU -> parallel linear heads with 3C position and 4C
/// orientation outputs.
struct NetworkConfig {
  int input_width = 80;
  int input_height = 60;
  std::vector<int> channels = {8, 16, 32, 64};
  int hidden = 256;
  int num_classes = 1;
  std::uint64_t seed = 0;

  /// Throws ConfigError. A stride-2 conv needs an input of at least 2x2;
  /// anything smaller has collapsed.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

struct ConvShape {
  int in_c, out_c, in_h, in_w, out_h, out_w;
};

std::vector<ConvShape> conv_shapes(const NetworkConfig& cfg);
/// Length of the flattened feature map fed to the FC layer.
int flat_size(const NetworkConfig& cfg);

/// Tensors in declared order: conv{i}.weight, conv{i}.bias, ..., fc.weight,
/// fc.bias, position.weight, position.bias, orientation.weight,
/// orientation.bias. Weights are (out, in) with conv inputs ordered
/// (ky, kx, channel).
template <typename Scalar>
struct NetworkParams {
  NetworkConfig config;
  std::vector<MatX<Scalar>> conv_w;
  std::vector<VecX<Scalar>> conv_b;
  MatX<Scalar> fc_w;
  VecX<Scalar> fc_b;
  MatX<Scalar> pos_w;
  VecX<Scalar> pos_b;
  MatX<Scalar> ori_w;
  VecX<Scalar> ori_b;

  /// Same shapes, all zeros.
  static NetworkParams zeros(const NetworkConfig& cfg);

  std::vector<std::span<Scalar>> views();
  std::vector<std::span<const Scalar>> views() const;
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  template <typename To>
  NetworkParams<To> cast() const;
};

/// Fan-in scaled normal weights (std sqrt(2 / fan_in)). Biases are zero
/// except the orientation heads, which start at the identity (1, 0, 0, 0).
template <typename Scalar>
NetworkParams<Scalar> init_params(const NetworkConfig& cfg);

struct PosePrediction {
  int class_id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Quaternion quaternion;  // normalized network output, not canonicalized
  Eigen::Vector4d raw_quaternion = Eigen::Vector4d(1, 0, 0, 0);
};

/// One column per image, pixels row-major. Masks map to {0, 1}; gray images
/// to [0, 1].
template <typename Scalar>
VecX<Scalar> to_input(const MaskImage& mask) {
  VecX<Scalar> v(static_cast<Eigen::Index>(mask.pixels.size()));
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) v[i] = mask.pixels[i] ? Scalar(1) : Scalar(0);
  return v;
}

template <typename Scalar>
VecX<Scalar> to_input(const GrayImage& image) {
  VecX<Scalar> v(static_cast<Eigen::Index>(image.pixels.size()));
  for (std::size_t i = 0; i < image.pixels.size(); ++i) v[i] = Scalar(image.pixels[i]) / Scalar(255);
  return v;
}

/// Intermediate values kept for the backward pass.
template <typename Scalar>
struct ForwardCache {
  int batch = 0;
  std::vector<MatX<Scalar>> cols;  // im2col buffer per conv layer
  std::vector<MatX<Scalar>> act;   // post-ReLU output per conv layer, (C, B*H*W)
  MatX<Scalar> hidden;             // post-ReLU FC output, (hidden, B)
  MatX<Scalar> pos;                // (3C, B)
  MatX<Scalar> ori;                // (4C, B)
};

/// inputs is (H*W, B). Fills every head output; callers pick the class slice.
template <typename Scalar>
void forward_batch(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                   ForwardCache<Scalar>& cache);

template <typename Scalar>
RawPose select_head(const ForwardCache<Scalar>& cache, int sample, int class_id) {
  RawPose out;
  out.position = cache.pos.col(sample).template segment<3>(3 * class_id).template cast<double>();
  out.raw_quaternion = cache.ori.col(sample).template segment<4>(4 * class_id).template cast<double>();
  return out;
}

/// Throws RangeError for a bad class id or input size, NumericError when the
/// raw quaternion vanishes.
template <typename Scalar>
PosePrediction forward(const NetworkParams<Scalar>& params, const VecX<Scalar>& input, int class_id);
template <typename Scalar>
PosePrediction forward(const NetworkParams<Scalar>& params, const MaskImage& mask, int class_id) {
  return forward(params, to_input<Scalar>(mask), class_id);
}

/// One prediction per input column, read from the matching class head.
template <typename Scalar>
std::vector<PosePrediction> predict_batch(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                                          std::span<const int> class_ids);

/// Reads a mask PGM and runs forward on it. Throws FormatError when the
/// image size differs from the network input.
PosePrediction predict_file(const NetworkParams<float>& params, const std::filesystem::path& mask_path,
                            int class_id);

struct BatchTarget {
  int class_id = 0;
  Pose target;
};

template <typename Scalar>
struct BatchGradient {
  NetworkParams<Scalar> grad;  // gradient of the summed batch loss
  double loss_sum = 0.0;
  std::vector<double> losses;
};

/// Loss for every sample on its own class head, summed over the batch, and
/// its gradient for every parameter. clouds[c] is the loss cloud for class c
/// (only needed for L3/L4).
template <typename Scalar>
BatchGradient<Scalar> backward(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                               std::span<const BatchTarget> targets, LossKind loss,
                               std::span<const Eigen::Matrix3Xd> clouds, const LossOptions& opts);

/// Full-network gradient check in double precision: central differences with
/// the given step on up to `per_tensor` randomly chosen entries of every
/// tensor. Returns ||g_a - g_n|| / max(||g_a||, ||g_n||) over the checked
/// entries.
double network_gradcheck(const NetworkConfig& cfg, LossKind loss, int batch, std::uint64_t seed,
                         int per_tensor = 40, double step = 1e-6);

}  // namespace pinet

#include "pinet/network_impl.hpp"
