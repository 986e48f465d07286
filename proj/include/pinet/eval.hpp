#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinet/network.hpp"
#include "pinet/pose.hpp"

namespace pinet {

struct PoseError {
  double position_cm = 0.0;
  double orientation_deg = 0.0;
};

/// Euclidean position error in cm; geodesic angle between canonicalize(pred.q)
/// and gt.q in degrees.
PoseError pose_errors(const PosePrediction& pred, const Pose& gt);

/// Success thresholds; both comparisons are strict.
struct SuccessCriterion {
  double max_position_cm = 5.0;
  double max_orientation_deg = 15.0;
};

/// pos_cm < 5 && ori_deg < 15. Throws InvalidArgument on negative input.
bool is_success(double pos_cm, double ori_deg, const SuccessCriterion& c = {});

struct EvalRecord {
  std::string sample_id;
  int class_id = 0;
  double position_cm = 0.0;
  double orientation_deg = 0.0;
  bool success = false;
};

EvalRecord make_record(std::string sample_id, const PosePrediction& pred, const Pose& gt,
                       const SuccessCriterion& c = {});

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;  // +inf for the overflow bin
  std::size_t count = 0;
};

struct ErrorStats {
  std::size_t count = 0;
  double mean_position_cm = 0.0;
  double median_position_cm = 0.0;
  double mean_orientation_deg = 0.0;
  double median_orientation_deg = 0.0;
  double success_rate = 0.0;
};

struct EvalReport {
  ErrorStats overall;
  std::map<int, ErrorStats> per_class;
  std::vector<HistogramBin> position_histogram;     // 0.5 cm bins to 20 cm, then overflow
  std::vector<HistogramBin> orientation_histogram;  // 2 degree bins to 180
  SuccessCriterion criterion;
};

/// Median of an even count is the lower middle value.
double lower_median(std::vector<double> values);

/// Throws InvalidArgument on empty input.
EvalReport aggregate(const std::vector<EvalRecord>& records, const SuccessCriterion& c = {});

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const ErrorStats& stats);
/// bin_lo,bin_hi,count
void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::filesystem::path& path);
void write_records_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path);

}  // namespace pinet
