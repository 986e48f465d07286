// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any selected criterion fails. Tolerances are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pinet/checkpoint.hpp"
#include "pinet/config.hpp"
#include "pinet/dataset.hpp"
#include "pinet/eval.hpp"
#include "pinet/experiments.hpp"
#include "pinet/loss.hpp"
#include "pinet/mesh.hpp"
#include "pinet/network.hpp"
#include "pinet/pose.hpp"
#include "pinet/random.hpp"
#include "pinet/render.hpp"
#include "pinet/sweep.hpp"
#include "pinet/train.hpp"

using namespace pinet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr double kLossGradTolerance = 1e-4;
constexpr double kNetworkGradTolerance = 1e-3;
constexpr int kGradTrials = 100;
constexpr double kGradBudgetSeconds = 60.0;
// Criterion 2
constexpr int kPoseSamples = 10000;
constexpr double kOrthonormalTolerance = 1e-12;
constexpr double kAxisAngleTolerance = 1e-9;  // radians
constexpr double kPoseBudgetSeconds = 10.0;
// Criterion 3
constexpr double kCubeSide = 0.2;
constexpr double kFocal = 525.0;
constexpr double kFootprintTolerance = 0.02;
constexpr double kScalingTolerance = 0.05;
constexpr double kRenderBudgetSeconds = 10.0;
// Criterion 4
constexpr double kTargetQ0 = 0.8;
constexpr int kGeodesicPoints = 10;
// Criterion 5
constexpr double kMaxMedianOrientationDeg = 20.0;
constexpr double kMaxMedianPositionCm = 2.5;
// Criterion 9
constexpr double kDeterminismBudgetSeconds = 7200.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path source_dir;
  fs::path work_dir;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------

Outcome gradients(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{true, ""};
  for (LossKind k : {LossKind::L1, LossKind::L2, LossKind::L3, LossKind::L4}) {
    const GradcheckReport r = gradcheck(k, kGradTrials, 1);
    o.pass = o.pass && r.trials == kGradTrials && r.max_relative_error < kLossGradTolerance;
    o.detail += to_string(k) + " " + fmt("%.2e", r.max_relative_error) + ", ";
  }
  NetworkConfig toy;
  toy.input_width = 16;
  toy.input_height = 12;
  toy.channels = {2, 2};
  toy.hidden = 8;
  toy.num_classes = 2;
  double worst = 0.0;
  for (LossKind k : {LossKind::L1, LossKind::L2, LossKind::L3, LossKind::L4}) {
    worst = std::max(worst, network_gradcheck(toy, k, 3, 1));
  }
  o.pass = o.pass && worst < kNetworkGradTolerance;
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < kGradBudgetSeconds;
  o.detail += "network " + fmt("%.2e", worst) + "; " + fmt("%.1f s", secs);
  return o;
}

// 2 ---------------------------------------------------------------------------

Outcome pose_math(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2);
  std::size_t bad_idem = 0, bad_cover = 0, bad_angle = 0;
  double worst_ortho = 0.0, worst_round_trip = 0.0;
  for (int i = 0; i < kPoseSamples; ++i) {
    const Quaternion q = uniform_quaternion(rng);
    const Quaternion c = canonicalize(q);
    bad_idem += !(canonicalize(c) == c);
    bad_cover += !(canonicalize(-q) == c);
    bad_angle += orientation_angle_deg(q, -q) != 0.0;

    const Eigen::Matrix3d r = quat_to_rotation(q);
    worst_ortho = std::max(worst_ortho, (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
    worst_ortho = std::max(worst_ortho, std::abs(r.determinant() - 1.0));

    const AxisAngle aa = quat_to_axis_angle(c);
    const double back = orientation_angle_deg(axis_angle_to_quat(aa), c) * std::numbers::pi / 180.0;
    worst_round_trip = std::max(worst_round_trip, back);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = bad_idem == 0 && bad_cover == 0 && bad_angle == 0 && worst_ortho <= kOrthonormalTolerance &&
           worst_round_trip < kAxisAngleTolerance && secs < kPoseBudgetSeconds;
  o.detail = std::to_string(kPoseSamples) + " samples; idempotence failures " + std::to_string(bad_idem) +
             ", double-cover failures " + std::to_string(bad_cover) + ", angle(q,-q) != 0: " +
             std::to_string(bad_angle) + "; orthonormality " + fmt("%.1e", worst_ortho) + "; axis-angle round trip " +
             fmt("%.1e rad", worst_round_trip) + "; " + fmt("%.2f s", secs);
  return o;
}

// 3 ---------------------------------------------------------------------------

// Silhouette area of an axis-aligned cube whose camera-facing side lies at
// `face_depth` on the optical axis.
double cube_area(double face_depth) {
  const TriangleMesh cube = make_box(Eigen::Vector3d::Constant(kCubeSide));
  CameraIntrinsics k;
  k.fx = k.fy = kFocal;
  Pose pose;
  pose.position = {0.0, 0.0, face_depth + kCubeSide / 2};
  return static_cast<double>(rasterize_silhouette(cube, pose, k).count_nonzero());
}

Outcome renderer(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{true, ""};
  const double a1 = cube_area(1.0);
  const double analytic = std::pow(kCubeSide * kFocal / 1.0, 2);
  const double footprint_err = std::abs(a1 - analytic) / analytic;
  o.pass = footprint_err <= kFootprintTolerance;
  o.detail = "depth 1 m: " + fmt("%.0f px", a1) + " vs " + fmt("%.0f", analytic) + " (" +
             fmt("%.2f%%", 100 * footprint_err) + "); scaling";
  for (double z : {0.5, 2.0}) {
    const double ratio = cube_area(z) * z * z / a1;
    o.pass = o.pass && std::abs(ratio - 1.0) <= kScalingTolerance;
    o.detail += fmt(" A(%.1f)", z) + fmt(" z^2/A(1) = %.4f", ratio);
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < kRenderBudgetSeconds;
  o.detail += "; " + fmt("%.2f s", secs);
  return o;
}

// 4 ---------------------------------------------------------------------------

Outcome double_cover(const Context& ctx) {
  const double s = std::sqrt(1.0 - kTargetQ0 * kTargetQ0);
  Pose target;
  target.position = {0.02, -0.01, 0.9};
  target.orientation = Quaternion(Eigen::Vector4d(kTargetQ0, s * 0.48, s * 0.6, s * 0.64));
  const Eigen::Matrix3Xd cloud =
      sample_surface(load_obj(ctx.source_dir / "data" / "meshes" / "tripod.obj"), 1000, 7).points;

  RawPose pred;
  pred.position = target.position;
  pred.raw_quaternion = -target.orientation.coeffs;
  const double l3 = loss_pointcloud(pred, target, cloud, PointReduction::Mean).value;
  const double l4 = loss_pointcloud_penalized(pred, target, cloud, PointReduction::Mean).value;
  Outcome o;
  o.pass = l3 == 0.0 && l4 == kTargetQ0;
  o.detail = "L3 = " + fmt("%.17g", l3) + ", L4 = " + fmt("%.17g", l4) + "; geodesic L4:";

  // -q and q are antipodal, so the path is the great circle from -q toward
  // the identity, stopping where the prediction reaches canonical form (q0 = 0).
  const Eigen::Vector4d a = -target.orientation.coeffs;
  const Eigen::Vector4d d = (Eigen::Vector4d::UnitX() - a[0] * a).normalized();
  const double t_end = std::atan2(-a[0], d[0]);
  double previous = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int i = 0; i < kGeodesicPoints; ++i) {
    const double t = t_end * i / kGeodesicPoints;
    pred.raw_quaternion = std::cos(t) * a + std::sin(t) * d;
    const double v = loss_pointcloud_penalized(pred, target, cloud, PointReduction::Mean).value;
    monotone = monotone && v < previous;
    previous = v;
    o.detail += fmt(" %.4f", v);
  }
  o.pass = o.pass && monotone;
  return o;
}

// 5-8 -------------------------------------------------------------------------

ExperimentReport experiment(const Context& ctx, const std::string& name) {
  json j = read_json_file(ctx.source_dir / "configs" / "experiments" / (name + ".json"));
  const fs::path mesh = j.at("data").at("mesh").get<std::string>();
  j["data"]["mesh"] = (mesh.is_absolute() ? mesh : ctx.source_dir / mesh).string();
  j["cache_dir"] = (ctx.work_dir / "cache").string();
  return run_experiment(experiment_config_from_json(j), ctx.work_dir / name);
}

std::string medians(const SweptRun& r) {
  return r.value + " " + fmt("%.2f cm", r.test.median_position_cm) + " / " + fmt("%.2f deg", r.test.median_orientation_deg);
}

Outcome verdict_outcome(const ExperimentReport& rep, const std::vector<std::string>& names) {
  Outcome o{true, ""};
  for (const auto& name : names) {
    const auto it = std::find_if(rep.verdicts.begin(), rep.verdicts.end(), [&](const Verdict& v) { return v.name == name; });
    const bool ok = it != rep.verdicts.end() && it->pass;
    o.pass = o.pass && ok;
    o.detail += name + (ok ? " ok" : " failed") + (it != rep.verdicts.end() ? " (" + it->detail + ")" : "") + "; ";
  }
  return o;
}

Outcome training(const Context& ctx) {
  const ExperimentReport rep = experiment(ctx, "mask-vs-object");
  const SweptRun& mask = rep.run("mask");
  const SweptRun& shaded = rep.run("shaded");
  Outcome o;
  const bool absolute =
      mask.test.median_orientation_deg < kMaxMedianOrientationDeg && mask.test.median_position_cm < kMaxMedianPositionCm;
  const bool ordering = shaded.test.median_position_cm <= mask.test.median_position_cm &&
                        shaded.test.median_orientation_deg <= mask.test.median_orientation_deg;
  o.pass = absolute && ordering;
  o.detail = medians(mask) + ", " + medians(shaded) + " on " + std::to_string(mask.test.count) +
             " held-out images; thresholds " + fmt("%.0f deg", kMaxMedianOrientationDeg) + " / " +
             fmt("%.1f cm", kMaxMedianPositionCm) + (absolute ? " met" : " missed") + "; object <= mask " +
             (ordering ? "holds" : "violated");
  return o;
}

Outcome loss_compare(const Context& ctx) {
  const auto rep = experiment(ctx, "loss-compare");
  Outcome o = verdict_outcome(rep, {"l2_orientation_exceeds_l4", "l3_l4_have_no_alpha"});
  for (const auto& r : rep.runs) o.detail += medians(r) + "; ";
  return o;
}

Outcome data_quantity(const Context& ctx) {
  const auto rep = experiment(ctx, "data-quantity");
  Outcome o = verdict_outcome(rep, {"median_position_non_increasing", "median_orientation_non_increasing",
                                    "median_position_plateau", "median_orientation_plateau"});
  for (const auto& r : rep.runs) o.detail += medians(r) + "; ";
  return o;
}

Outcome occlusion(const Context& ctx) {
  const auto rep = experiment(ctx, "occlusion");
  return verdict_outcome(rep, {"baseline_degrades_with_occlusion", "occlusion_trained_r24_more_robust"});
}

// 9 ---------------------------------------------------------------------------

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

// Hash over sorted relative paths and file contents.
std::string tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    std::ifstream in(root / f, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    all += f.generic_string() + '\0' + content_hash(s.str()) + '\n';
  }
  return content_hash(all);
}

// Generate, split, train, evaluate and sweep into `out`; one hash per stage.
std::map<std::string, std::string> pipeline(const Context& ctx, const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out);
  GenerateOptions g;
  g.classes = {{"tripod", ctx.source_dir / "data" / "meshes" / "tripod.obj", 7, 1000, false}};
  g.counts = {2000};
  g.intrinsics = CameraIntrinsics{}.scaled(80, 60);
  g.kind = ImageKind::Both;
  g.seed = 5;
  g.out_dir = out / "generate";
  generate_dataset(g);

  const auto data = load_dataset(g.out_dir / "manifest.jsonl");
  const auto [train_view, test_view] = split(DatasetView::all(data), 0.9, 6);
  fs::create_directories(out / "split");
  write_text(out / "split" / "split.json", json{{"train", train_view.indices}, {"test", test_view.indices}}.dump());

  TrainConfig tc;
  tc.epochs = 2;
  tc.decay_epochs = {1};
  tc.occlusion_max_radius = 6;
  tc.seed = 8;
  NetworkConfig nc;
  nc.seed = 8;
  const TrainResult trained = train(train_view, test_view, nc, tc);
  fs::create_directories(out / "train");
  save_checkpoint(trained.params, out / "train" / "model.ckpt");
  json log = to_json(trained.log);
  for (auto& row : log["epochs"]) row.erase("seconds");
  write_text(out / "train" / "train_log.json", log.dump());

  fs::create_directories(out / "eval");
  const auto records = evaluate_view(trained.params, test_view, InputKind::Mask);
  write_records_csv(records, out / "eval" / "records.csv");
  write_text(out / "eval" / "eval.json", to_json(aggregate(records)).dump());

  fs::create_directories(out / "sweep");
  const SweepResult sweep = sensitivity_sweep(trained.params, test_view, {0, 2, 4, 6}, 9);
  write_sweep_csv(sweep, out / "sweep" / "sweep.csv");
  write_text(out / "sweep" / "sweep.json", to_json(sweep).dump());

  std::map<std::string, std::string> hashes;
  for (const char* stage : {"generate", "split", "train", "eval", "sweep"}) hashes[stage] = tree_hash(out / stage);
  return hashes;
}

Outcome determinism(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = pipeline(ctx, ctx.work_dir / "determinism" / "a");
  const auto b = pipeline(ctx, ctx.work_dir / "determinism" / "b");
  Outcome o{true, ""};
  for (const auto& [stage, hash] : a) {
    const bool same = b.at(stage) == hash;
    o.pass = o.pass && same;
    o.detail += stage + " " + hash + (same ? " = " : " != ") + b.at(stage) + "; ";
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < kDeterminismBudgetSeconds;
  o.detail += fmt("%.1f s", secs);
  return o;
}

// 10 --------------------------------------------------------------------------

Outcome success_criterion(const Context&) {
  Outcome o;
  const bool strict = !is_success(5.0, 10.0) && !is_success(2.0, 15.0) && !is_success(5.0, 15.0) &&
                      is_success(std::nextafter(5.0, 0.0), std::nextafter(15.0, 0.0)) && is_success(3.23, 6.17);
  PosePrediction pred;
  pred.position = {0.03, 0.0, 0.04};
  Pose gt;
  const double cm = pose_errors(pred, gt).position_cm;
  o.pass = strict && cm == 5.0;
  o.detail = std::string("strict boundaries ") + (strict ? "hold" : "violated") + "; 3-4-5 error " + fmt("%.17g cm", cm);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Context ctx;
  std::string source = PINET_SOURCE_DIR, work = "acceptance";
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--source-dir", source, "Repository root (meshes and configs)");
  app.add_option("--work-dir", work, "Cache and output directory");
  CLI11_PARSE(app, argc, argv);
  ctx.source_dir = source;
  ctx.work_dir = fs::absolute(work);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient correctness", gradients},
      {"pose math", pose_math},
      {"renderer oracle", renderer},
      {"double-cover resolution", double_cover},
      {"desk-scale training", training},
      {"loss-compare ordering", loss_compare},
      {"data-quantity trend", data_quantity},
      {"occlusion robustness", occlusion},
      {"determinism", determinism},
      {"success criterion", success_criterion},
  };
  if (selected.empty()) {
    for (int i = 1; i <= 10; ++i) selected.push_back(i);
  }
  bool all = true;
  for (int i : selected) {
    const auto& [name, check] = criteria[i - 1];
    Outcome o;
    try {
      o = check(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s | %s\n", i, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
