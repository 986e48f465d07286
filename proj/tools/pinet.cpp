// pinet: command-line entry point. Exit codes: 0 success, 1 validation
// error (bad flags, config, inputs), 2 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pinet/checkpoint.hpp"
#include "pinet/config.hpp"
#include "pinet/dataset.hpp"
#include "pinet/eval.hpp"
#include "pinet/experiments.hpp"
#include "pinet/loss.hpp"
#include "pinet/network.hpp"
#include "pinet/render.hpp"
#include "pinet/sweep.hpp"
#include "pinet/train.hpp"
#include "pinet/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pinet;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config_path, "JSON config file");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.epochs=5")->take_all();
  auto* out = cmd->add_option("--out", c.out, "Output directory (nothing is written elsewhere)");
  if (needs_out) out->required();
  cmd->add_option("--seed", c.seed, "Seed for all randomness of this command");
  cmd->add_option("--threads", c.threads, "Worker cap")->check(CLI::PositiveNumber);
}

json load_config(const Common& c) {
  json j = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  for (const auto& o : c.overrides) apply_override(j, o);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("schema_version") && j.at("schema_version") != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

/// Everything needed to repeat the run; no timestamps, so identical runs
/// leave identical trees.
void write_run_metadata(const fs::path& out, const std::string& subcommand, const json& resolved, const Common& c) {
  json meta = {{"tool", "pinet"},
               {"version", kVersion},
               {"config_schema_version", kConfigSchemaVersion},
               {"subcommand", subcommand},
               {"threads", c.threads},
               {"config", resolved}};
  meta["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  write_file(out / "run.json", meta.dump(2) + "\n");
}

std::string require_string(const json& j, const char* key, const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ConfigError(std::string("missing '") + key + "' (config key or flag)");
  }
  return j.at(key).get<std::string>();
}

// gen-data ------------------------------------------------------------------

int cmd_gen_data(const Common& c) {
  json j = load_config(c);
  check_keys(j, {"schema_version", "classes", "intrinsics", "resolution", "sampler", "kind", "seed"}, "gen-data");
  if (c.seed) j["seed"] = *c.seed;
  GenerateOptions g;
  g.seed = j.value("seed", std::uint64_t{0});
  g.kind = parse_image_kind(j.value("kind", std::string("mask")));
  if (j.contains("intrinsics")) g.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  if (j.contains("resolution")) {
    const auto r = j.at("resolution").get<std::vector<int>>();
    if (r.size() != 2) throw ConfigError("gen-data.resolution: expected [width, height]");
    g.intrinsics = g.intrinsics.scaled(r[0], r[1]);
  }
  if (j.contains("sampler")) g.sampler = sampler_from_json(j.at("sampler"));
  g.sampler.seed = g.seed;
  if (!j.contains("classes") || !j.at("classes").is_array() || j.at("classes").empty()) {
    throw ConfigError("gen-data: 'classes' must be a non-empty array");
  }
  for (const json& cls : j.at("classes")) {
    check_keys(cls, {"name", "mesh", "count", "cloud_seed", "cloud_points", "cloud_mode"}, "gen-data.classes[]");
    ClassSpec s;
    s.name = cls.at("name").get<std::string>();
    s.mesh = cls.at("mesh").get<std::string>();
    s.cloud_seed = cls.value("cloud_seed", std::uint64_t{0});
    s.cloud_points = cls.value("cloud_points", 1000);
    const std::string mode = cls.value("cloud_mode", std::string("surface"));
    if (mode != "surface" && mode != "vertices") throw ConfigError("cloud_mode must be 'surface' or 'vertices'");
    s.cloud_from_vertices = mode == "vertices";
    g.classes.push_back(s);
    g.counts.push_back(cls.at("count").get<int>());
  }
  g.out_dir = c.out;
  generate_dataset(g);

  json resolved = j;
  resolved["intrinsics"] = to_json(g.intrinsics);
  resolved["sampler"] = to_json(g.sampler);
  resolved.erase("resolution");
  write_run_metadata(c.out, "gen-data", resolved, c);
  return 0;
}

// train -----------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& data_flag, const std::string& heldout_flag) {
  json j = load_config(c);
  check_keys(j, {"schema_version", "data", "heldout", "net", "train"}, "train");
  const fs::path manifest = require_string(j, "data", data_flag);
  const auto data = load_dataset(manifest);

  json net_json = j.value("net", json::object());
  if (!net_json.contains("num_classes")) net_json["num_classes"] = data->num_classes();
  if (!net_json.contains("input_width")) net_json["input_width"] = data->manifest.intrinsics.width;
  if (!net_json.contains("input_height")) net_json["input_height"] = data->manifest.intrinsics.height;
  json train_json = j.value("train", json::object());
  if (c.seed) {
    net_json["seed"] = *c.seed;
    train_json["seed"] = *c.seed;
  }
  const NetworkConfig net = network_config_from_json(net_json);
  const TrainConfig cfg = train_config_from_json(train_json);

  std::optional<DatasetView> heldout;
  std::string heldout_path = heldout_flag;
  if (heldout_path.empty() && j.contains("heldout")) heldout_path = j.at("heldout").get<std::string>();
  if (!heldout_path.empty()) heldout = DatasetView::all(load_dataset(heldout_path));

  fs::create_directories(c.out);
  const TrainResult result =
      train(DatasetView::all(data), heldout, net, cfg, [](const EpochLog& e, const NetworkParams<float>&) {
        std::clog << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.mean_loss;
        if (e.heldout) {
          std::clog << " heldout median " << e.heldout->median_position_cm << " cm "
                    << e.heldout->median_orientation_deg << " deg";
        }
        std::clog << " (" << e.seconds << " s)\n";
      });
  save_checkpoint(result.params, fs::path(c.out) / "model.ckpt");
  json log = to_json(result.log);
  for (auto& row : log["epochs"]) row.erase("seconds");
  write_file(fs::path(c.out) / "train_log.json", log.dump(2) + "\n");

  json resolved = {{"data", manifest.string()}, {"net", to_json(net)}, {"train", to_json(cfg)}};
  if (!heldout_path.empty()) resolved["heldout"] = heldout_path;
  write_run_metadata(c.out, "train", resolved, c);
  return 0;
}

// eval ------------------------------------------------------------------------

int cmd_eval(const Common& c, const std::string& data_flag, const std::string& model_flag,
             const std::string& input_flag) {
  json j = load_config(c);
  check_keys(j, {"schema_version", "data", "model", "input", "max_position_cm", "max_orientation_deg"}, "eval");
  const fs::path manifest = require_string(j, "data", data_flag);
  const fs::path model = require_string(j, "model", model_flag);
  const InputKind input = parse_input_kind(input_flag.empty() ? j.value("input", std::string("mask")) : input_flag);
  SuccessCriterion crit;
  crit.max_position_cm = j.value("max_position_cm", crit.max_position_cm);
  crit.max_orientation_deg = j.value("max_orientation_deg", crit.max_orientation_deg);

  const auto data = load_dataset(manifest);
  const NetworkParams<float> params = load_checkpoint(model);
  const auto records = evaluate_view(params, DatasetView::all(data), input, crit);
  const EvalReport report = aggregate(records, crit);

  fs::create_directories(c.out);
  const fs::path out(c.out);
  write_file(out / "eval.json", to_json(report).dump(2) + "\n");
  write_records_csv(records, out / "records.csv");
  write_histogram_csv(report.position_histogram, out / "hist_position.csv");
  write_histogram_csv(report.orientation_histogram, out / "hist_orientation.csv");
  write_run_metadata(out, "eval",
                     {{"data", manifest.string()},
                      {"model", model.string()},
                      {"input", to_string(input)},
                      {"max_position_cm", crit.max_position_cm},
                      {"max_orientation_deg", crit.max_orientation_deg}},
                     c);
  std::printf("median position %.3f cm, median orientation %.3f deg, success %.4f (n=%zu)\n",
              report.overall.median_position_cm, report.overall.median_orientation_deg,
              report.overall.success_rate, report.overall.count);
  return 0;
}

// gradcheck -------------------------------------------------------------------

int cmd_gradcheck(const Common& c, const std::string& loss_flag, int trials, bool network) {
  const std::uint64_t seed = c.seed.value_or(0);
  std::vector<LossKind> kinds;
  if (loss_flag == "all") {
    kinds = {LossKind::L1, LossKind::L2, LossKind::L3, LossKind::L4};
  } else {
    kinds = {parse_loss_kind(loss_flag)};
  }
  constexpr double kLossTolerance = 1e-4;
  constexpr double kNetworkTolerance = 1e-3;
  bool ok = true;
  json results = json::array();
  for (LossKind k : kinds) {
    const GradcheckReport r = gradcheck(k, trials, seed);
    std::printf("%s: max relative error %.3e over %d trials (%d redrawn near kinks)\n", to_string(k).c_str(),
                r.max_relative_error, r.trials, r.resampled);
    ok = ok && r.max_relative_error < kLossTolerance;
    results.push_back({{"loss", to_string(k)},
                       {"max_relative_error", r.max_relative_error},
                       {"trials", r.trials},
                       {"resampled", r.resampled}});
  }
  if (network) {
    NetworkConfig toy;
    toy.input_width = 16;
    toy.input_height = 12;
    toy.channels = {2, 2};
    toy.hidden = 8;
    toy.num_classes = 2;
    toy.seed = seed;
    for (LossKind k : kinds) {
      const double err = network_gradcheck(toy, k, 3, seed);
      std::printf("network (%s): max relative error %.3e\n", to_string(k).c_str(), err);
      ok = ok && err < kNetworkTolerance;
      results.push_back({{"network_loss", to_string(k)}, {"max_relative_error", err}});
    }
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_file(fs::path(c.out) / "gradcheck.json", results.dump(2) + "\n");
    write_run_metadata(c.out, "gradcheck", {{"loss", loss_flag}, {"trials", trials}, {"network", network}}, c);
  }
  return ok ? 0 : 2;
}

// experiment / bench-loss -----------------------------------------------------

int cmd_experiment(const Common& c, bool loss_only) {
  json j = load_config(c);
  if (loss_only) {
    if (j.contains("experiment") && j.at("experiment") != "loss-compare") {
      throw ConfigError("bench-loss runs the loss-compare experiment only");
    }
    j["experiment"] = "loss-compare";
  }
  if (!j.contains("cache_dir")) j["cache_dir"] = (fs::path(c.out) / "cache").string();
  if (c.seed) {
    j["train"]["seed"] = *c.seed;
    j["net"]["seed"] = *c.seed;
  }
  const ExperimentConfig cfg = experiment_config_from_json(j);
  const ExperimentReport report = run_experiment(cfg, c.out);
  write_run_metadata(c.out, loss_only ? "bench-loss" : "experiment", to_json(cfg), c);
  for (const auto& run : report.runs) {
    std::printf("%-8s median position %.3f cm, median orientation %.3f deg\n", run.value.c_str(),
                run.test.median_position_cm, run.test.median_orientation_deg);
  }
  for (const auto& v : report.verdicts) {
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", v.name.c_str(), v.detail.c_str());
  }
  return 0;
}

// occlude ---------------------------------------------------------------------

int cmd_occlude(const Common& c, const std::string& data_flag, const std::string& model_flag,
                std::vector<double> radii) {
  json j = load_config(c);
  check_keys(j, {"schema_version", "data", "model", "radii", "bins"}, "occlude");
  const fs::path manifest = require_string(j, "data", data_flag);
  const fs::path model = require_string(j, "model", model_flag);
  if (radii.empty()) radii = j.value("radii", std::vector<double>{0, 1, 2, 3, 4, 5, 6, 8});
  const int bins = j.value("bins", 20);
  const std::uint64_t seed = c.seed.value_or(0);

  const auto data = load_dataset(manifest);
  const NetworkParams<float> params = load_checkpoint(model);
  const SweepResult sweep = sensitivity_sweep(params, DatasetView::all(data), radii, seed, bins);

  fs::create_directories(c.out);
  write_sweep_csv(sweep, fs::path(c.out) / "sweep.csv");
  write_file(fs::path(c.out) / "sweep.json", to_json(sweep).dump(2) + "\n");
  write_run_metadata(c.out, "occlude",
                     {{"data", manifest.string()}, {"model", model.string()}, {"radii", radii}, {"bins", bins}}, c);
  return 0;
}

// render-preview --------------------------------------------------------------

int cmd_render_preview(const Common& c, const std::string& mesh_flag, const std::vector<double>& pose_flag,
                       const std::string& kind_flag) {
  json j = load_config(c);
  check_keys(j, {"schema_version", "mesh", "pose", "intrinsics", "resolution", "sampler", "kind"}, "render-preview");
  const fs::path mesh_path = require_string(j, "mesh", mesh_flag);
  const TriangleMesh mesh = load_obj(mesh_path);
  CameraIntrinsics k;
  if (j.contains("intrinsics")) k = intrinsics_from_json(j.at("intrinsics"));
  if (j.contains("resolution")) {
    const auto r = j.at("resolution").get<std::vector<int>>();
    if (r.size() != 2) throw ConfigError("render-preview.resolution: expected [width, height]");
    k = k.scaled(r[0], r[1]);
  }
  const std::string kind = kind_flag.empty() ? j.value("kind", std::string("mask")) : kind_flag;
  if (kind != "mask" && kind != "shaded") throw ConfigError("render-preview kind must be mask or shaded");

  std::vector<double> pv = pose_flag;
  if (pv.empty() && j.contains("pose")) pv = j.at("pose").get<std::vector<double>>();
  Pose pose;
  if (pv.empty()) {
    PoseSamplerConfig s;
    if (j.contains("sampler")) s = sampler_from_json(j.at("sampler"));
    Rng rng = derive_rng(c.seed.value_or(0), 0);
    pose = sample_pose(s, mesh, k, rng);
  } else {
    if (pv.size() != 7) throw ConfigError("pose needs 7 numbers: x y z q0 qx qy qz");
    pose.position = Eigen::Vector3d(pv[0], pv[1], pv[2]);
    pose.orientation = canonicalize(Quaternion(Eigen::Vector4d(pv[3], pv[4], pv[5], pv[6])));
  }

  fs::create_directories(c.out);
  const fs::path image = fs::path(c.out) / (kind == "mask" ? "mask.pgm" : "shaded.pgm");
  if (kind == "mask") {
    write_pgm(rasterize_silhouette(mesh, pose, k), image);
  } else {
    write_pgm(render_shaded(mesh, pose, k), image);
  }
  const auto& q = pose.orientation.coeffs;
  write_run_metadata(c.out, "render-preview",
                     {{"mesh", mesh_path.string()},
                      {"intrinsics", to_json(k)},
                      {"kind", kind},
                      {"pose", {pose.position.x(), pose.position.y(), pose.position.z(), q[0], q[1], q[2], q[3]}}},
                     c);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-data 6-DoF pose interpreter toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  std::string data, heldout, model, input, loss = "all", mesh, kind;
  int trials = 100;
  bool network = false;
  std::vector<double> radii, pose;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset");
  add_common(gen, common, true);

  auto* tr = app.add_subcommand("train", "Train a pose interpreter network");
  add_common(tr, common, true);
  tr->add_option("--data", data, "Training manifest.jsonl");
  tr->add_option("--heldout", heldout, "Held-out manifest for per-epoch metrics");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(ev, common, true);
  ev->add_option("--data", data, "Manifest to evaluate on");
  ev->add_option("--model", model, "Checkpoint");
  ev->add_option("--input", input, "mask or shaded");

  auto* gc = app.add_subcommand("gradcheck", "Check loss (and network) gradients by finite differences");
  add_common(gc, common, false);
  gc->add_option("--loss", loss, "l1, l2, l3, l4 or all");
  gc->add_option("--trials", trials, "Random configurations per loss")->check(CLI::PositiveNumber);
  gc->add_flag("--network", network, "Also check the full network on a toy configuration");

  auto* ex = app.add_subcommand("experiment", "Run a configured experiment");
  add_common(ex, common, true);
  auto* bl = app.add_subcommand("bench-loss", "Run the loss comparison experiment");
  add_common(bl, common, true);

  auto* oc = app.add_subcommand("occlude", "Occlusion sensitivity sweep");
  add_common(oc, common, true);
  oc->add_option("--data", data, "Test manifest");
  oc->add_option("--model", model, "Checkpoint");
  oc->add_option("--radii", radii, "Occlusion radii in pixels (0 = none)")->delimiter(',');

  auto* rp = app.add_subcommand("render-preview", "Render one mask or shaded image");
  add_common(rp, common, true);
  rp->add_option("--mesh", mesh, "OBJ mesh");
  rp->add_option("--pose", pose, "x,y,z,q0,qx,qy,qz (default: sampled with --seed)")->delimiter(',');
  rp->add_option("--kind", kind, "mask or shaded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*tr) return cmd_train(common, data, heldout);
    if (*ev) return cmd_eval(common, data, model, input);
    if (*gc) return cmd_gradcheck(common, loss, trials, network);
    if (*ex) return cmd_experiment(common, false);
    if (*bl) return cmd_experiment(common, true);
    if (*oc) return cmd_occlude(common, data, model, radii);
    if (*rp) return cmd_render_preview(common, mesh, pose, kind);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
