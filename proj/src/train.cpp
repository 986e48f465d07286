#include "pinet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pinet/occlusion.hpp"

namespace pinet {

InputKind parse_input_kind(const std::string& s) {
  if (s == "mask") return InputKind::Mask;
  if (s == "shaded" || s == "object") return InputKind::Shaded;
  throw ConfigError("unknown input kind '" + s + "' (expected mask or shaded)");
}

std::string to_string(InputKind k) { return k == InputKind::Mask ? "mask" : "shaded"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(decay_factor >= 1.0)) throw ConfigError("train: decay factor must be >= 1");
  if (!(alpha >= 0.0)) throw ConfigError("train: alpha must be >= 0");
  if (occlusion_max_radius != 0.0 && !(occlusion_max_radius >= 1.0)) {
    throw ConfigError("train: occlusion radius must be 0 (off) or >= 1");
  }
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int d : cfg.decay_epochs) {
    if (epoch > d) lr /= cfg.decay_factor;
  }
  return lr;
}

nlohmann::json to_json(const TrainingLog& log) {
  nlohmann::json j;
  j["optimizer"] = log.optimizer;
  j["initialization"] = log.initialization;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}, {"learning_rate", e.learning_rate}, {"mean_loss", e.mean_loss}};
    if (e.heldout) row["heldout"] = to_json(*e.heldout);
    j["epochs"].push_back(row);
  }
  return j;
}

MatX<float> gather_inputs(const DatasetView& view, std::size_t begin, std::size_t end, InputKind kind) {
  const Dataset& d = *view.data;
  if (kind == InputKind::Shaded && !d.has_shaded()) throw ConfigError("dataset has no shaded images");
  const int w = d.manifest.intrinsics.width, h = d.manifest.intrinsics.height;
  MatX<float> out(static_cast<Eigen::Index>(w) * h, static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t idx = view.indices[i];
    const auto col = static_cast<Eigen::Index>(i - begin);
    out.col(col) = kind == InputKind::Mask ? to_input<float>(d.masks[idx]) : to_input<float>(d.shaded[idx]);
  }
  return out;
}

std::vector<EvalRecord> evaluate_view(const NetworkParams<float>& params, const DatasetView& view, InputKind kind,
                                      const SuccessCriterion& c) {
  constexpr std::size_t kChunk = 128;
  std::vector<EvalRecord> records;
  records.reserve(view.size());
  for (std::size_t begin = 0; begin < view.size(); begin += kChunk) {
    const std::size_t end = std::min(view.size(), begin + kChunk);
    std::vector<int> classes;
    for (std::size_t i = begin; i < end; ++i) classes.push_back(view.record(i).class_id);
    const auto preds = predict_batch(params, gather_inputs(view, begin, end, kind), std::span<const int>(classes));
    for (std::size_t i = begin; i < end; ++i) {
      const DatasetRecord& r = view.record(i);
      records.push_back(make_record(r.id, preds[i - begin], r.pose, c));
    }
  }
  return records;
}

TrainResult train(const DatasetView& train_set, const std::optional<DatasetView>& heldout,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  net_cfg.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  const Dataset& data = *train_set.data;
  const auto& k = data.manifest.intrinsics;
  if (k.width != net_cfg.input_width || k.height != net_cfg.input_height) {
    throw ConfigError("train: dataset images are " + std::to_string(k.width) + "x" + std::to_string(k.height) +
                      " but the network expects " + std::to_string(net_cfg.input_width) + "x" +
                      std::to_string(net_cfg.input_height));
  }
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (train_set.record(i).class_id >= net_cfg.num_classes) {
      throw ConfigError("train: record '" + train_set.record(i).id + "' has a class outside the network's heads");
    }
  }
  if (cfg.occlusion_max_radius > 0.0 && cfg.input != InputKind::Mask) {
    throw ConfigError("train: occlusion augmentation applies to mask inputs only");
  }

  TrainResult result{init_params<float>(net_cfg), {}};
  SgdMomentum<float> opt(result.params, cfg.momentum, cfg.weight_decay);
  LossOptions lopts;
  lopts.weights.alpha = cfg.alpha;
  lopts.reduction = cfg.point_reduction;
  std::vector<Eigen::Matrix3Xd> clouds(data.clouds.begin(), data.clouds.end());
  clouds.resize(std::max<std::size_t>(clouds.size(), static_cast<std::size_t>(net_cfg.num_classes)),
                Eigen::Matrix3Xd::Zero(3, 1));

  const std::size_t n = train_set.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate_at(cfg, epoch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_total = 0.0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      DatasetView batch{train_set.data, {}};
      for (std::size_t i = begin; i < end; ++i) batch.indices.push_back(train_set.indices[order[i]]);
      MatX<float> inputs = gather_inputs(batch, 0, batch.size(), cfg.input);
      if (cfg.occlusion_max_radius > 0.0) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
          Rng occ_rng = derive_rng(cfg.seed ^ kOcclusionSalt,
                                   (static_cast<std::uint64_t>(epoch) << 32) + static_cast<std::uint64_t>(order[begin + i]));
          const MaskImage& original = data.masks[batch.indices[i]];
          const MaskImage occluded = apply_occlusion(original, random_occlusion(original, cfg.occlusion_max_radius, occ_rng));
          inputs.col(static_cast<Eigen::Index>(i)) = to_input<float>(occluded);
        }
      }
      std::vector<BatchTarget> targets;
      targets.reserve(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) targets.push_back({batch.record(i).class_id, batch.record(i).pose});
      const BatchGradient<float> g = backward<float>(result.params, inputs, targets, cfg.loss, clouds, lopts);
      loss_total += g.loss_sum;
      // Mean over the batch.
      opt.step(result.params, g.grad, lr, 1.0f / static_cast<float>(batch.size()));
    }
    if (!result.params.all_finite()) {
      throw NumericError("train: parameters diverged to non-finite values in epoch " + std::to_string(epoch));
    }
    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    log.mean_loss = loss_total / static_cast<double>(n);
    if (heldout && !heldout->empty()) log.heldout = aggregate(evaluate_view(result.params, *heldout, cfg.input)).overall;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(log);
    if (on_epoch) on_epoch(log, result.params);
  }
  return result;
}

}  // namespace pinet
