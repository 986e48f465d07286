#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinet/dataset.hpp"
#include "pinet/eval.hpp"
#include "pinet/network.hpp"
#include "pinet/sweep.hpp"
#include "pinet/train.hpp"

namespace pinet {

enum class ExperimentKind { LossCompare, DataQuantity, MaskVsObject, OcclusionRobustness };
ExperimentKind parse_experiment_kind(const std::string& s);
std::string to_string(ExperimentKind k);

/// Synthetic data shared by every run of an experiment: a training set, a
/// validation set (best-epoch selection) and a test set, each generated from
/// its own seed.
struct DataConfig {
  std::filesystem::path mesh;
  std::string class_name = "object";
  int train_count = 25000;
  int val_count = 500;
  int test_count = 1000;
  std::uint64_t train_seed = 1;
  std::uint64_t val_seed = 3;
  std::uint64_t test_seed = 2;
  CameraIntrinsics intrinsics = CameraIntrinsics{}.scaled(80, 60);
  PoseSamplerConfig sampler;
  int cloud_points = 1000;
  std::uint64_t cloud_seed = 7;
  ImageKind kind = ImageKind::Mask;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::LossCompare;
  DataConfig data;
  NetworkConfig net;
  TrainConfig train;
  /// Swept values: loss names, training-set sizes, input kinds ("mask",
  /// "shaded") or maximum occlusion radii at the reference width.
  std::vector<std::string> values;
  /// Loss-compare only: decay epochs per loss, overriding train.decay_epochs.
  std::map<std::string, std::vector<int>> decay_epochs_by_value;
  /// Data-quantity only: scale epochs (and decay epochs) so that every size
  /// gets the iteration count of the largest.
  bool equal_iterations = true;
  /// Keep the parameters of the epoch with the lowest validation median
  /// orientation error instead of the last epoch.
  bool select_best = false;
  /// Validation passes per run when select_best is on (spread evenly).
  int selection_evals = 21;
  /// Occlusion-robustness only.
  double reference_width = 320.0;
  std::vector<double> sweep_radii = {0, 1, 2, 3, 4, 5, 6, 8};
  std::uint64_t sweep_seed = 11;
  /// Datasets and trained runs are cached here, keyed by a hash of their
  /// resolved configuration, so experiments share identical runs.
  std::filesystem::path cache_dir;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SweptRun {
  std::string value;
  std::filesystem::path run_dir;
  nlohmann::json train_config;  // resolved, as written to the run directory
  ErrorStats test;
  int train_images = 0;
  int epochs = 0;
  int selected_epoch = 0;
  std::optional<SweepResult> sweep;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::LossCompare;
  std::vector<SweptRun> runs;  // in swept-value order
  std::vector<Verdict> verdicts;

  const SweptRun& run(const std::string& value) const;
};

nlohmann::json to_json(const ExperimentReport& r);

/// Generates (or reuses) the data, trains one model per swept value with
/// shared seeds, evaluates all of them on the same test set and writes
/// report.json and table.csv under out_dir. Finished runs are found by their
/// completion marker and skipped on rerun.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Ordering and trend checks, computed from the swept results alone.
std::vector<Verdict> compute_verdicts(const ExperimentConfig& cfg, const std::vector<SweptRun>& runs);

/// Loads or generates the three datasets of `data` under cache_dir.
struct ExperimentData {
  std::shared_ptr<const Dataset> train, val, test;
};
ExperimentData prepare_data(const DataConfig& data, const std::filesystem::path& cache_dir);

/// Stable 64-bit FNV-1a of a string, printed as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace pinet
