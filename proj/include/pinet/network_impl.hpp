#pragma once

// Template definitions for network.hpp.

#include <algorithm>
#include <random>

namespace pinet {

namespace detail {

// cols is (9 C, B Ho Wo); row (ky*3 + kx)*C + c, column (b*Ho + oy)*Wo + ox.
template <typename Scalar>
void im2col(const Scalar* in, const ConvShape& s, int batch, MatX<Scalar>& cols) {
  const int c = s.in_c;
  cols.setZero(9 * c, static_cast<Eigen::Index>(batch) * s.out_h * s.out_w);
  Scalar* out = cols.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        Scalar* col = out + ((static_cast<std::size_t>(b) * s.out_h + oy) * s.out_w + ox) * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy - 1 + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox - 1 + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            const Scalar* src = in + ((static_cast<std::size_t>(b) * s.in_h + iy) * s.in_w + ix) * c;
            std::copy(src, src + c, col + (ky * 3 + kx) * c);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const MatX<Scalar>& dcols, const ConvShape& s, int batch, MatX<Scalar>& din) {
  const int c = s.in_c;
  din.setZero(c, static_cast<Eigen::Index>(batch) * s.in_h * s.in_w);
  const Scalar* src_all = dcols.data();
  Scalar* out = din.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        const Scalar* col = src_all + ((static_cast<std::size_t>(b) * s.out_h + oy) * s.out_w + ox) * 9 * c;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy - 1 + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox - 1 + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            Scalar* dst = out + ((static_cast<std::size_t>(b) * s.in_h + iy) * s.in_w + ix) * c;
            const Scalar* g = col + (ky * 3 + kx) * c;
            for (int k = 0; k < c; ++k) dst[k] += g[k];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void relu_inplace(MatX<Scalar>& m) {
  m = m.cwiseMax(Scalar(0));
}

// Zeroes grad where the ReLU output was not positive.
template <typename Scalar>
void relu_backward(const MatX<Scalar>& out, MatX<Scalar>& grad) {
  grad = (out.array() > Scalar(0)).select(grad, Scalar(0));
}

}  // namespace detail

template <typename Scalar>
NetworkParams<Scalar> NetworkParams<Scalar>::zeros(const NetworkConfig& cfg) {
  cfg.validate();
  NetworkParams p;
  p.config = cfg;
  for (const auto& s : conv_shapes(cfg)) {
    p.conv_w.push_back(MatX<Scalar>::Zero(s.out_c, 9 * s.in_c));
    p.conv_b.push_back(VecX<Scalar>::Zero(s.out_c));
  }
  p.fc_w = MatX<Scalar>::Zero(cfg.hidden, flat_size(cfg));
  p.fc_b = VecX<Scalar>::Zero(cfg.hidden);
  p.pos_w = MatX<Scalar>::Zero(3 * cfg.num_classes, cfg.hidden);
  p.pos_b = VecX<Scalar>::Zero(3 * cfg.num_classes);
  p.ori_w = MatX<Scalar>::Zero(4 * cfg.num_classes, cfg.hidden);
  p.ori_b = VecX<Scalar>::Zero(4 * cfg.num_classes);
  return p;
}

template <typename Scalar>
std::vector<std::span<Scalar>> NetworkParams<Scalar>::views() {
  std::vector<std::span<Scalar>> v;
  auto add = [&](auto& m) { v.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    add(conv_w[i]);
    add(conv_b[i]);
  }
  add(fc_w);
  add(fc_b);
  add(pos_w);
  add(pos_b);
  add(ori_w);
  add(ori_b);
  return v;
}

template <typename Scalar>
std::vector<std::span<const Scalar>> NetworkParams<Scalar>::views() const {
  std::vector<std::span<const Scalar>> out;
  for (auto s : const_cast<NetworkParams*>(this)->views()) out.emplace_back(s.data(), s.size());
  return out;
}

template <typename Scalar>
std::vector<std::string> NetworkParams<Scalar>::names() const {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    n.push_back("conv" + std::to_string(i) + ".weight");
    n.push_back("conv" + std::to_string(i) + ".bias");
  }
  for (const char* t : {"fc", "position", "orientation"}) {
    n.push_back(std::string(t) + ".weight");
    n.push_back(std::string(t) + ".bias");
  }
  return n;
}

template <typename Scalar>
std::size_t NetworkParams<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (auto s : views()) n += s.size();
  return n;
}

template <typename Scalar>
bool NetworkParams<Scalar>::all_finite() const {
  for (auto s : views()) {
    for (Scalar x : s) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

template <typename Scalar>
template <typename To>
NetworkParams<To> NetworkParams<Scalar>::cast() const {
  NetworkParams<To> p = NetworkParams<To>::zeros(config);
  auto src = views();
  auto dst = p.views();
  for (std::size_t t = 0; t < src.size(); ++t) {
    for (std::size_t i = 0; i < src[t].size(); ++i) dst[t][i] = static_cast<To>(src[t][i]);
  }
  return p;
}

template <typename Scalar>
NetworkParams<Scalar> init_params(const NetworkConfig& cfg) {
  NetworkParams<Scalar> p = NetworkParams<Scalar>::zeros(cfg);
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](MatX<Scalar>& w) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(std_dev * normal(rng));
    }
  };
  for (auto& w : p.conv_w) fill(w);
  fill(p.fc_w);
  fill(p.pos_w);
  fill(p.ori_w);
  // Each orientation head starts biased toward the identity rotation so a
  // blank input still yields a unit quaternion.
  for (int c = 0; c < cfg.num_classes; ++c) p.ori_b[4 * c] = Scalar(1);
  return p;
}

template <typename Scalar>
void forward_batch(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                   ForwardCache<Scalar>& cache) {
  const NetworkConfig& cfg = params.config;
  const auto shapes = conv_shapes(cfg);
  if (inputs.rows() != static_cast<Eigen::Index>(cfg.input_width) * cfg.input_height) {
    throw RangeError("network input has " + std::to_string(inputs.rows()) + " pixels, expected " +
                     std::to_string(cfg.input_width * cfg.input_height));
  }
  const int batch = static_cast<int>(inputs.cols());
  cache.batch = batch;
  cache.cols.resize(shapes.size());
  cache.act.resize(shapes.size());
  const Scalar* in = inputs.data();
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    detail::im2col(in, shapes[l], batch, cache.cols[l]);
    cache.act[l].noalias() = params.conv_w[l] * cache.cols[l];
    cache.act[l].colwise() += params.conv_b[l];
    detail::relu_inplace(cache.act[l]);
    in = cache.act[l].data();
  }
  // Each sample's final feature map is contiguous: flattening is a reshape.
  const Eigen::Map<const MatX<Scalar>> flat(cache.act.back().data(), flat_size(cfg), batch);
  cache.hidden.noalias() = params.fc_w * flat;
  cache.hidden.colwise() += params.fc_b;
  detail::relu_inplace(cache.hidden);
  cache.pos.noalias() = params.pos_w * cache.hidden;
  cache.pos.colwise() += params.pos_b;
  cache.ori.noalias() = params.ori_w * cache.hidden;
  cache.ori.colwise() += params.ori_b;
}

template <typename Scalar>
PosePrediction forward(const NetworkParams<Scalar>& params, const VecX<Scalar>& input, int class_id) {
  const int cls[1] = {class_id};
  return predict_batch(params, MatX<Scalar>(input), std::span<const int>(cls)).front();
}

template <typename Scalar>
std::vector<PosePrediction> predict_batch(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                                          std::span<const int> class_ids) {
  if (static_cast<Eigen::Index>(class_ids.size()) != inputs.cols()) {
    throw ConfigError("predict: " + std::to_string(inputs.cols()) + " inputs but " +
                      std::to_string(class_ids.size()) + " class ids");
  }
  for (int c : class_ids) {
    if (c < 0 || c >= params.config.num_classes) {
      throw RangeError("class id " + std::to_string(c) + " out of range [0, " +
                       std::to_string(params.config.num_classes) + ")");
    }
  }
  ForwardCache<Scalar> cache;
  forward_batch(params, inputs, cache);
  std::vector<PosePrediction> out;
  out.reserve(class_ids.size());
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    const RawPose raw = select_head(cache, static_cast<int>(i), class_ids[i]);
    const double n = raw.raw_quaternion.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) throw NumericError("network produced a zero quaternion");
    PosePrediction p;
    p.class_id = class_ids[i];
    p.position = raw.position;
    p.raw_quaternion = raw.raw_quaternion;
    p.quaternion = Quaternion(Eigen::Vector4d(raw.raw_quaternion / n));
    out.push_back(p);
  }
  return out;
}

template <typename Scalar>
BatchGradient<Scalar> backward(const NetworkParams<Scalar>& params, const MatX<Scalar>& inputs,
                               std::span<const BatchTarget> targets, LossKind loss,
                               std::span<const Eigen::Matrix3Xd> clouds, const LossOptions& opts) {
  const NetworkConfig& cfg = params.config;
  if (targets.empty()) throw InvalidArgument("backward: empty batch");
  if (static_cast<Eigen::Index>(targets.size()) != inputs.cols()) {
    throw ConfigError("backward: batch has " + std::to_string(inputs.cols()) + " inputs but " +
                      std::to_string(targets.size()) + " targets");
  }
  if (uses_cloud(loss) && static_cast<int>(clouds.size()) < cfg.num_classes) {
    throw ConfigError("backward: need one loss cloud per class");
  }
  ForwardCache<Scalar> cache;
  forward_batch(params, inputs, cache);
  const int batch = cache.batch;

  BatchGradient<Scalar> out;
  out.grad = NetworkParams<Scalar>::zeros(cfg);
  out.losses.resize(batch);
  MatX<Scalar> d_pos = MatX<Scalar>::Zero(cache.pos.rows(), batch);
  MatX<Scalar> d_ori = MatX<Scalar>::Zero(cache.ori.rows(), batch);
  for (int b = 0; b < batch; ++b) {
    const int c = targets[b].class_id;
    if (c < 0 || c >= cfg.num_classes) throw RangeError("backward: class id out of range");
    const Eigen::Matrix3Xd* cloud = uses_cloud(loss) ? &clouds[c] : nullptr;
    const LossValueGrad lg = evaluate_loss(loss, select_head(cache, b, c), targets[b].target, cloud, opts);
    out.losses[b] = lg.value;
    out.loss_sum += lg.value;
    d_pos.col(b).template segment<3>(3 * c) = lg.d_position.cast<Scalar>();
    d_ori.col(b).template segment<4>(4 * c) = lg.d_raw_quaternion.cast<Scalar>();
  }

  auto& g = out.grad;
  g.pos_w.noalias() = d_pos * cache.hidden.transpose();
  g.pos_b = d_pos.rowwise().sum();
  g.ori_w.noalias() = d_ori * cache.hidden.transpose();
  g.ori_b = d_ori.rowwise().sum();

  MatX<Scalar> d_hidden = params.pos_w.transpose() * d_pos;
  d_hidden.noalias() += params.ori_w.transpose() * d_ori;
  detail::relu_backward(cache.hidden, d_hidden);

  const Eigen::Map<const MatX<Scalar>> flat(cache.act.back().data(), flat_size(cfg), batch);
  g.fc_w.noalias() = d_hidden * flat.transpose();
  g.fc_b = d_hidden.rowwise().sum();
  MatX<Scalar> d_flat = params.fc_w.transpose() * d_hidden;

  const auto shapes = conv_shapes(cfg);
  MatX<Scalar> d_act = Eigen::Map<MatX<Scalar>>(d_flat.data(), shapes.back().out_c,
                                                static_cast<Eigen::Index>(batch) * shapes.back().out_h *
                                                    shapes.back().out_w);
  for (int l = static_cast<int>(shapes.size()) - 1; l >= 0; --l) {
    detail::relu_backward(cache.act[l], d_act);
    g.conv_w[l].noalias() = d_act * cache.cols[l].transpose();
    g.conv_b[l] = d_act.rowwise().sum();
    if (l == 0) break;
    const MatX<Scalar> d_cols = params.conv_w[l].transpose() * d_act;
    detail::col2im(d_cols, shapes[l], batch, d_act);
  }
  return out;
}

}  // namespace pinet
