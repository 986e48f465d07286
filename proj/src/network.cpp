#include "pinet/network.hpp"

namespace pinet {

void NetworkConfig::validate() const {
  if (input_width < 1 || input_height < 1) throw ConfigError("network: input size must be positive");
  if (channels.empty()) throw ConfigError("network: need at least one conv layer");
  for (int c : channels) {
    if (c < 1) throw ConfigError("network: conv channel counts must be positive");
  }
  if (hidden < 8) throw ConfigError("network: hidden width must be >= 8");
  if (num_classes < 1) throw ConfigError("network: need at least one class");
  int h = input_height, w = input_width;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    if (h < 2 || w < 2) {
      throw ConfigError("network: feature map collapses below 1x1 before conv layer " + std::to_string(l) +
                        " (" + std::to_string(input_width) + "x" + std::to_string(input_height) +
                        " input, " + std::to_string(channels.size()) + " stride-2 convs)");
    }
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
  }
}

std::vector<ConvShape> conv_shapes(const NetworkConfig& cfg) {
  std::vector<ConvShape> shapes;
  int c = 1, h = cfg.input_height, w = cfg.input_width;
  for (int out_c : cfg.channels) {
    const int oh = (h - 1) / 2 + 1, ow = (w - 1) / 2 + 1;
    shapes.push_back({c, out_c, h, w, oh, ow});
    c = out_c;
    h = oh;
    w = ow;
  }
  return shapes;
}

int flat_size(const NetworkConfig& cfg) {
  const ConvShape last = conv_shapes(cfg).back();
  return last.out_c * last.out_h * last.out_w;
}

double network_gradcheck(const NetworkConfig& cfg, LossKind loss, int batch, std::uint64_t seed,
                         int per_tensor, double step) {
  cfg.validate();
  if (batch < 1) throw InvalidArgument("network_gradcheck: batch must be >= 1");
  Rng rng(seed);
  NetworkParams<double> params = init_params<double>(cfg);
  // Nonzero biases so the check also exercises them.
  for (auto view : params.views()) {
    for (double& x : view) {
      if (x == 0.0) x = uniform(rng, -0.05, 0.05);
    }
  }

  const int pixels = cfg.input_width * cfg.input_height;
  MatX<double> inputs(pixels, batch);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = uniform01(rng);
  std::vector<BatchTarget> targets(batch);
  for (auto& t : targets) {
    t.class_id = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes));
    t.target.orientation = uniform_quaternion(rng);
    t.target.position = {uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, 0.6, 1.2)};
  }
  std::vector<Eigen::Matrix3Xd> clouds(cfg.num_classes);
  for (auto& c : clouds) {
    c.resize(3, 16);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = uniform(rng, -0.1, 0.1);
  }
  const LossOptions opts;
  const BatchGradient<double> analytic = backward<double>(params, inputs, targets, loss, clouds, opts);

  auto loss_at = [&](const NetworkParams<double>& p) {
    return backward<double>(p, inputs, targets, loss, clouds, opts).loss_sum;
  };
  std::vector<double> ga, gn;
  auto param_views = params.views();
  const auto grad_views = analytic.grad.views();
  for (std::size_t t = 0; t < param_views.size(); ++t) {
    const std::size_t n = param_views[t].size();
    const int picks = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(per_tensor)));
    for (int k = 0; k < picks; ++k) {
      const std::size_t i = n <= static_cast<std::size_t>(per_tensor) ? static_cast<std::size_t>(k) : rng() % n;
      double& x = param_views[t][i];
      const double saved = x;
      x = saved + step;
      const double up = loss_at(params);
      x = saved - step;
      const double down = loss_at(params);
      x = saved;
      ga.push_back(grad_views[t][i]);
      gn.push_back((up - down) / (2.0 * step));
    }
  }
  const Eigen::Map<const Eigen::VectorXd> a(ga.data(), static_cast<Eigen::Index>(ga.size()));
  const Eigen::Map<const Eigen::VectorXd> num(gn.data(), static_cast<Eigen::Index>(gn.size()));
  return (a - num).norm() / std::max({a.norm(), num.norm(), 1e-12});
}

PosePrediction predict_file(const NetworkParams<float>& params, const std::filesystem::path& mask_path,
                            int class_id) {
  const MaskImage mask = read_mask_pgm(mask_path);
  const NetworkConfig& cfg = params.config;
  if (mask.width != cfg.input_width || mask.height != cfg.input_height) {
    throw FormatError(mask_path.string() + ": image is " + std::to_string(mask.width) + "x" +
                      std::to_string(mask.height) + ", network expects " + std::to_string(cfg.input_width) + "x" +
                      std::to_string(cfg.input_height));
  }
  return forward(params, mask, class_id);
}

template struct NetworkParams<float>;
template struct NetworkParams<double>;

}  // namespace pinet
