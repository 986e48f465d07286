#include "pinet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace pinet {

PoseError pose_errors(const PosePrediction& pred, const Pose& gt) {
  PoseError e;
  e.position_cm = ((pred.position - gt.position) * 100.0).norm();
  e.orientation_deg = orientation_angle_deg(canonicalize(pred.quaternion), gt.orientation);
  return e;
}

bool is_success(double pos_cm, double ori_deg, const SuccessCriterion& c) {
  if (!(pos_cm >= 0.0) || !(ori_deg >= 0.0)) throw InvalidArgument("is_success: errors must be nonnegative");
  return pos_cm < c.max_position_cm && ori_deg < c.max_orientation_deg;
}

EvalRecord make_record(std::string sample_id, const PosePrediction& pred, const Pose& gt,
                       const SuccessCriterion& c) {
  const PoseError e = pose_errors(pred, gt);
  return {std::move(sample_id), pred.class_id, e.position_cm, e.orientation_deg,
          is_success(e.position_cm, e.orientation_deg, c)};
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty set");
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

namespace {

ErrorStats stats_of(const std::vector<const EvalRecord*>& recs) {
  ErrorStats s;
  s.count = recs.size();
  std::vector<double> pos, ori;
  std::size_t successes = 0;
  for (const auto* r : recs) {
    pos.push_back(r->position_cm);
    ori.push_back(r->orientation_deg);
    successes += r->success;
  }
  const double n = static_cast<double>(recs.size());
  s.mean_position_cm = std::accumulate(pos.begin(), pos.end(), 0.0) / n;
  s.mean_orientation_deg = std::accumulate(ori.begin(), ori.end(), 0.0) / n;
  s.median_position_cm = lower_median(pos);
  s.median_orientation_deg = lower_median(ori);
  s.success_rate = static_cast<double>(successes) / n;
  return s;
}

std::vector<HistogramBin> histogram(const std::vector<EvalRecord>& records, double width, double top,
                                    bool overflow, double EvalRecord::*field) {
  const int n = static_cast<int>(std::lround(top / width));
  std::vector<HistogramBin> bins;
  for (int i = 0; i < n; ++i) bins.push_back({i * width, (i + 1) * width, 0});
  if (overflow) bins.push_back({top, std::numeric_limits<double>::infinity(), 0});
  for (const auto& r : records) {
    const double v = r.*field;
    int idx = static_cast<int>(std::floor(v / width));
    idx = std::clamp(idx, 0, static_cast<int>(bins.size()) - 1);
    ++bins[static_cast<std::size_t>(idx)].count;
  }
  return bins;
}

}  // namespace

EvalReport aggregate(const std::vector<EvalRecord>& records, const SuccessCriterion& c) {
  if (records.empty()) throw InvalidArgument("aggregate: no records");
  EvalReport report;
  report.criterion = c;
  std::vector<const EvalRecord*> all;
  std::map<int, std::vector<const EvalRecord*>> by_class;
  for (const auto& r : records) {
    all.push_back(&r);
    by_class[r.class_id].push_back(&r);
  }
  report.overall = stats_of(all);
  for (const auto& [cls, recs] : by_class) report.per_class[cls] = stats_of(recs);
  report.position_histogram = histogram(records, 0.5, 20.0, true, &EvalRecord::position_cm);
  // 180 degrees lands in the last bin.
  report.orientation_histogram = histogram(records, 2.0, 180.0, false, &EvalRecord::orientation_deg);
  return report;
}

nlohmann::json to_json(const ErrorStats& s) {
  return {{"count", s.count},
          {"mean_position_cm", s.mean_position_cm},
          {"median_position_cm", s.median_position_cm},
          {"mean_orientation_deg", s.mean_orientation_deg},
          {"median_orientation_deg", s.median_orientation_deg},
          {"success_rate", s.success_rate}};
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["overall"] = to_json(report.overall);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cls, s] : report.per_class) per[std::to_string(cls)] = to_json(s);
  j["per_class"] = per;
  auto bins = [](const std::vector<HistogramBin>& h) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : h) {
      arr.push_back({{"lo", b.lo}, {"hi", std::isinf(b.hi) ? nlohmann::json("inf") : nlohmann::json(b.hi)},
                     {"count", b.count}});
    }
    return arr;
  };
  j["position_histogram_cm"] = bins(report.position_histogram);
  j["orientation_histogram_deg"] = bins(report.orientation_histogram);
  j["metadata"] = {{"median", "lower-middle"},
                   {"success_rule", "position_cm < max_position_cm && orientation_deg < max_orientation_deg"},
                   {"max_position_cm", report.criterion.max_position_cm},
                   {"max_orientation_deg", report.criterion.max_orientation_deg},
                   {"orientation_metric", "geodesic 2*acos(|<q_pred,q_gt>|)"}};
  return j;
}

void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "bin_lo,bin_hi,count\n";
  for (const auto& b : bins) {
    out << b.lo << ',';
    if (std::isinf(b.hi)) {
      out << "inf";
    } else {
      out << b.hi;
    }
    out << ',' << b.count << '\n';
  }
}

void write_records_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << std::setprecision(17) << "sample_id,class,position_cm,orientation_deg,success\n";
  for (const auto& r : records) {
    out << r.sample_id << ',' << r.class_id << ',' << r.position_cm << ',' << r.orientation_deg << ','
        << (r.success ? 1 : 0) << '\n';
  }
}

}  // namespace pinet
