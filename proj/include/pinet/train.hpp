#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinet/dataset.hpp"
#include "pinet/eval.hpp"
#include "pinet/loss.hpp"
#include "pinet/network.hpp"

namespace pinet {

/// Which image of a record the network sees.
enum class InputKind { Mask, Shaded };
InputKind parse_input_kind(const std::string& s);
std::string to_string(InputKind k);

struct TrainConfig {
  LossKind loss = LossKind::L4;
  int batch_size = 32;
  double weight_decay = 1e-4;
  double learning_rate = 0.01;
  std::vector<int> decay_epochs = {7, 14};
  double decay_factor = 10.0;
  int epochs = 21;
  double momentum = 0.9;
  double alpha = 1.0;  // L1/L2 only
  PointReduction point_reduction = PointReduction::Mean;
  InputKind input = InputKind::Mask;
  double occlusion_max_radius = 0.0;  // pixels at the network resolution; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learning rate in effect during 1-based epoch e: the base rate divided by
/// decay_factor once for every decay epoch d with e > d.
double learning_rate_at(const TrainConfig& cfg, int epoch);

/// SGD with momentum and decoupled weight decay:
///   v <- momentum v + g;  p <- p (1 - lr wd) - lr v
template <typename Scalar>
class SgdMomentum {
 public:
  SgdMomentum(const NetworkParams<Scalar>& params, double momentum, double weight_decay)
      : velocity_(NetworkParams<Scalar>::zeros(params.config)), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(NetworkParams<Scalar>& params, const NetworkParams<Scalar>& grad, double lr, Scalar grad_scale = 1) {
    auto p = params.views();
    const auto g = grad.views();
    auto v = velocity_.views();
    const Scalar mu = static_cast<Scalar>(momentum_);
    const Scalar shrink = static_cast<Scalar>(1.0 - lr * weight_decay_);
    const Scalar eta = static_cast<Scalar>(lr);
    for (std::size_t t = 0; t < p.size(); ++t) {
      for (std::size_t i = 0; i < p[t].size(); ++i) {
        v[t][i] = mu * v[t][i] + grad_scale * g[t][i];
        p[t][i] = p[t][i] * shrink - eta * v[t][i];
      }
    }
  }

 private:
  NetworkParams<Scalar> velocity_;
  double momentum_;
  double weight_decay_;
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double mean_loss = 0.0;
  std::optional<ErrorStats> heldout;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::string optimizer = "sgd-momentum, decoupled weight decay";
  std::string initialization = "normal(0, sqrt(2/fan_in)) weights, zero biases, identity orientation bias";
};

nlohmann::json to_json(const TrainingLog& log);

struct TrainResult {
  NetworkParams<float> params;
  TrainingLog log;
};

/// Network input matrix (H*W, n) for the given records.
MatX<float> gather_inputs(const DatasetView& view, std::size_t begin, std::size_t end, InputKind kind);

/// Predicts every record of the view (batched) and scores it.
std::vector<EvalRecord> evaluate_view(const NetworkParams<float>& params, const DatasetView& view, InputKind kind,
                                      const SuccessCriterion& c = {});

/// Called after every epoch with the log row and the current parameters.
using EpochCallback = std::function<void(const EpochLog&, const NetworkParams<float>&)>;

/// Deterministic for fixed seeds: the epoch-e shuffle uses derive_rng(seed, e)
/// and occlusion for record r in epoch e uses derive_rng(seed ^ kOcclusionSalt,
/// e * 2^32 + r). Throws InvalidArgument on an empty training set.
TrainResult train(const DatasetView& train_set, const std::optional<DatasetView>& heldout,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

inline constexpr std::uint64_t kOcclusionSalt = 0x6f63636cULL;

}  // namespace pinet
