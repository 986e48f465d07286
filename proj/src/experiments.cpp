#include "pinet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "pinet/checkpoint.hpp"
#include "pinet/config.hpp"
#include "pinet/occlusion.hpp"

namespace pinet {

using nlohmann::json;
namespace fs = std::filesystem;

ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "loss-compare") return ExperimentKind::LossCompare;
  if (s == "data-quantity") return ExperimentKind::DataQuantity;
  if (s == "mask-vs-object") return ExperimentKind::MaskVsObject;
  if (s == "occlusion-robustness") return ExperimentKind::OcclusionRobustness;
  throw ConfigError("unknown experiment '" + s +
                    "' (expected loss-compare, data-quantity, mask-vs-object or occlusion-robustness)");
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::LossCompare: return "loss-compare";
    case ExperimentKind::DataQuantity: return "data-quantity";
    case ExperimentKind::MaskVsObject: return "mask-vs-object";
    case ExperimentKind::OcclusionRobustness: return "occlusion-robustness";
  }
  return "?";
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

int parse_count(const std::string& v) {
  std::size_t used = 0;
  int n = 0;
  try {
    n = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || n < 1) throw ConfigError("data-quantity value '" + v + "' is not a positive integer");
  return n;
}

double parse_radius(const std::string& v) {
  std::size_t used = 0;
  double r = 0.0;
  try {
    r = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !(r == 0.0 || r >= 1.0)) {
    throw ConfigError("occlusion value '" + v + "' must be 0 (off) or a radius >= 1");
  }
  return r;
}

json data_to_json(const DataConfig& d) {
  return {{"mesh", d.mesh.string()},
          {"class_name", d.class_name},
          {"train_count", d.train_count},
          {"val_count", d.val_count},
          {"test_count", d.test_count},
          {"train_seed", d.train_seed},
          {"val_seed", d.val_seed},
          {"test_seed", d.test_seed},
          {"intrinsics", to_json(d.intrinsics)},
          {"sampler", to_json(d.sampler)},
          {"cloud_points", d.cloud_points},
          {"cloud_seed", d.cloud_seed},
          {"kind", to_string(d.kind)}};
}

DataConfig data_from_json(const json& j) {
  check_keys(j,
             {"mesh", "class_name", "train_count", "val_count", "test_count", "train_seed", "val_seed", "test_seed",
              "intrinsics", "sampler", "cloud_points", "cloud_seed", "kind"},
             "data");
  DataConfig d;
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("data.") + key + ": wrong type");
    }
  };
  std::string mesh, kind;
  get("mesh", mesh);
  d.mesh = mesh;
  get("class_name", d.class_name);
  get("train_count", d.train_count);
  get("val_count", d.val_count);
  get("test_count", d.test_count);
  get("train_seed", d.train_seed);
  get("val_seed", d.val_seed);
  get("test_seed", d.test_seed);
  get("cloud_points", d.cloud_points);
  get("cloud_seed", d.cloud_seed);
  if (j.contains("intrinsics")) d.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  if (j.contains("sampler")) d.sampler = sampler_from_json(j.at("sampler"));
  get("kind", kind);
  if (!kind.empty()) d.kind = parse_image_kind(kind);
  return d;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) { return read_json_file(path); }

ErrorStats stats_from_json(const json& j) {
  ErrorStats s;
  s.count = j.at("count").get<std::size_t>();
  s.mean_position_cm = j.at("mean_position_cm").get<double>();
  s.median_position_cm = j.at("median_position_cm").get<double>();
  s.mean_orientation_deg = j.at("mean_orientation_deg").get<double>();
  s.median_orientation_deg = j.at("median_orientation_deg").get<double>();
  s.success_rate = j.at("success_rate").get<double>();
  return s;
}

std::shared_ptr<const Dataset> ensure_dataset(const DataConfig& d, const fs::path& dir, int count,
                                              std::uint64_t seed) {
  const fs::path marker = dir / "COMPLETE";
  if (!fs::exists(marker)) {
    fs::remove_all(dir);
    GenerateOptions g;
    g.classes = {{d.class_name, d.mesh, d.cloud_seed, d.cloud_points, false}};
    g.counts = {count};
    g.sampler = d.sampler;
    g.sampler.seed = seed;
    g.intrinsics = d.intrinsics;
    g.out_dir = dir;
    g.seed = seed;
    g.kind = d.kind;
    generate_dataset(g);
    write_text(marker, "");
  }
  return load_dataset(dir / "manifest.jsonl");
}

/// The swept value applied to the base configs.
struct RunPlan {
  std::string value;
  TrainConfig train;
  int images = 0;
};

RunPlan plan_run(const ExperimentConfig& cfg, const std::string& value, int max_images) {
  RunPlan p{value, cfg.train, cfg.data.train_count};
  switch (cfg.kind) {
    case ExperimentKind::LossCompare: {
      p.train.loss = parse_loss_kind(value);
      if (auto it = cfg.decay_epochs_by_value.find(value); it != cfg.decay_epochs_by_value.end()) {
        p.train.decay_epochs = it->second;
      }
      break;
    }
    case ExperimentKind::DataQuantity: {
      p.images = parse_count(value);
      if (p.images > cfg.data.train_count) {
        throw ConfigError("data-quantity value " + value + " exceeds data.train_count");
      }
      if (cfg.equal_iterations) {
        const double scale = static_cast<double>(max_images) / static_cast<double>(p.images);
        p.train.epochs = std::max(1, static_cast<int>(std::lround(cfg.train.epochs * scale)));
        for (int& d : p.train.decay_epochs) d = static_cast<int>(std::lround(d * scale));
      }
      break;
    }
    case ExperimentKind::MaskVsObject: p.train.input = parse_input_kind(value); break;
    case ExperimentKind::OcclusionRobustness: {
      const double r = parse_radius(value);
      p.train.occlusion_max_radius =
          r == 0.0 ? 0.0 : std::max(1.0, scale_radius(r, static_cast<int>(cfg.reference_width), cfg.data.intrinsics.width));
      p.train.input = InputKind::Mask;
      break;
    }
  }
  p.train.validate();
  return p;
}

SweptRun execute_run(const ExperimentConfig& cfg, const RunPlan& plan, const ExperimentData& data) {
  const json train_json = to_json(plan.train);
  const json key = {{"version", 1},
                    {"data", data_to_json(cfg.data)},
                    {"net", to_json(cfg.net)},
                    {"train", train_json},
                    {"train_images", plan.images},
                    {"select_best", cfg.select_best},
                    {"selection_evals", cfg.selection_evals}};
  const fs::path dir = cfg.cache_dir / "runs" / content_hash(key.dump());
  const fs::path marker = dir / "COMPLETE";

  SweptRun run;
  run.value = plan.value;
  run.run_dir = dir;
  run.train_config = train_json;
  run.train_images = plan.images;
  run.epochs = plan.train.epochs;

  if (fs::exists(marker)) {
    const json done = read_json(dir / "result.json");
    run.test = stats_from_json(done.at("test"));
    run.selected_epoch = done.at("selected_epoch").get<int>();
    std::clog << "[experiment] " << plan.value << ": reusing " << dir.string() << "\n";
    return run;
  }

  fs::remove_all(dir);
  fs::create_directories(dir);
  write_text(dir / "run.json", key.dump(2) + "\n");

  const DatasetView train_view = DatasetView::all(data.train).first_per_class(static_cast<std::size_t>(plan.images));
  const DatasetView val_view = DatasetView::all(data.val);
  const DatasetView test_view = DatasetView::all(data.test);

  const int interval = std::max(1, plan.train.epochs / std::max(1, cfg.selection_evals));
  std::optional<NetworkParams<float>> best;
  double best_ori = std::numeric_limits<double>::infinity();
  int best_epoch = plan.train.epochs;
  json selection = json::array();

  std::clog << "[experiment] " << to_string(cfg.kind) << " " << plan.value << ": " << plan.images << " images, "
            << plan.train.epochs << " epochs\n";
  TrainResult result = train(train_view, std::nullopt, cfg.net, plan.train,
                             [&](const EpochLog& e, const NetworkParams<float>& params) {
                               std::clog << "[train] epoch " << e.epoch << " lr " << e.learning_rate << " loss "
                                         << e.mean_loss << " (" << e.seconds << " s)\n";
                               if (!cfg.select_best) return;
                               if (e.epoch % interval != 0 && e.epoch != plan.train.epochs) return;
                               const ErrorStats v = aggregate(evaluate_view(params, val_view, plan.train.input)).overall;
                               selection.push_back({{"epoch", e.epoch}, {"validation", to_json(v)}});
                               if (v.median_orientation_deg < best_ori) {
                                 best_ori = v.median_orientation_deg;
                                 best_epoch = e.epoch;
                                 best = params;
                               }
                             });
  const NetworkParams<float>& chosen = best ? *best : result.params;
  const std::vector<EvalRecord> records = evaluate_view(chosen, test_view, plan.train.input);
  const EvalReport report = aggregate(records);

  save_checkpoint(chosen, dir / "model.ckpt");
  json log = to_json(result.log);
  log["selection"] = selection;
  write_text(dir / "train_log.json", log.dump(2) + "\n");
  write_text(dir / "eval.json", to_json(report).dump(2) + "\n");
  write_records_csv(records, dir / "records.csv");

  run.test = report.overall;
  run.selected_epoch = best_epoch;
  write_text(dir / "result.json",
             json{{"test", to_json(report.overall)}, {"selected_epoch", best_epoch}}.dump(2) + "\n");
  write_text(marker, "");
  return run;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (values.empty()) throw ConfigError("experiment: no swept values");
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t k = i + 1; k < values.size(); ++k) {
      if (values[i] == values[k]) throw ConfigError("experiment: swept value '" + values[i] + "' repeats");
    }
  }
  if (data.mesh.empty()) throw ConfigError("experiment: data.mesh is required");
  if (data.train_count < 1 || data.val_count < 1 || data.test_count < 1) {
    throw ConfigError("experiment: dataset counts must be >= 1");
  }
  if (cache_dir.empty()) throw ConfigError("experiment: cache_dir is required");
  if (selection_evals < 1) throw ConfigError("experiment: selection_evals must be >= 1");
  if (data.intrinsics.width != net.input_width || data.intrinsics.height != net.input_height) {
    throw ConfigError("experiment: data resolution differs from the network input");
  }
  if (kind == ExperimentKind::MaskVsObject && data.kind != ImageKind::Both) {
    throw ConfigError("mask-vs-object needs data.kind = both");
  }
  if (kind == ExperimentKind::OcclusionRobustness && sweep_radii.empty()) {
    throw ConfigError("occlusion-robustness needs sweep radii");
  }
  int largest = data.train_count;
  if (kind == ExperimentKind::DataQuantity) {
    largest = 0;
    for (const auto& v : values) largest = std::max(largest, parse_count(v));
  }
  for (const auto& v : values) plan_run(*this, v, largest);
}

ExperimentConfig experiment_config_from_json(const json& j) {
  check_keys(j,
             {"schema_version", "experiment", "data", "net", "train", "values", "decay_epochs_by_value",
              "equal_iterations", "select_best", "selection_evals", "reference_width", "sweep_radii", "sweep_seed",
              "cache_dir"},
             "experiment");
  if (j.contains("schema_version") && j.at("schema_version") != kConfigSchemaVersion) {
    throw ConfigError("experiment: unsupported schema_version");
  }
  ExperimentConfig c;
  try {
    if (!j.contains("experiment")) throw ConfigError("experiment: 'experiment' is required");
    c.kind = parse_experiment_kind(j.at("experiment").get<std::string>());
    if (j.contains("data")) c.data = data_from_json(j.at("data"));
    if (j.contains("net")) c.net = network_config_from_json(j.at("net"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("values")) {
      for (const json& v : j.at("values")) c.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    if (j.contains("decay_epochs_by_value")) {
      for (const auto& [k, v] : j.at("decay_epochs_by_value").items()) c.decay_epochs_by_value[k] = v.get<std::vector<int>>();
    }
    if (j.contains("equal_iterations")) c.equal_iterations = j.at("equal_iterations").get<bool>();
    if (j.contains("select_best")) c.select_best = j.at("select_best").get<bool>();
    if (j.contains("selection_evals")) c.selection_evals = j.at("selection_evals").get<int>();
    if (j.contains("reference_width")) c.reference_width = j.at("reference_width").get<double>();
    if (j.contains("sweep_radii")) c.sweep_radii = j.at("sweep_radii").get<std::vector<double>>();
    if (j.contains("sweep_seed")) c.sweep_seed = j.at("sweep_seed").get<std::uint64_t>();
    if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = {{"schema_version", kConfigSchemaVersion},
            {"experiment", to_string(c.kind)},
            {"data", data_to_json(c.data)},
            {"net", to_json(c.net)},
            {"train", to_json(c.train)},
            {"values", c.values},
            {"equal_iterations", c.equal_iterations},
            {"select_best", c.select_best},
            {"selection_evals", c.selection_evals},
            {"reference_width", c.reference_width},
            {"sweep_radii", c.sweep_radii},
            {"sweep_seed", c.sweep_seed},
            {"cache_dir", c.cache_dir.string()}};
  j["decay_epochs_by_value"] = json::object();
  for (const auto& [k, v] : c.decay_epochs_by_value) j["decay_epochs_by_value"][k] = v;
  return j;
}

ExperimentData prepare_data(const DataConfig& data, const fs::path& cache_dir) {
  const fs::path root = cache_dir / "data" / content_hash(data_to_json(data).dump());
  fs::create_directories(root);
  ExperimentData out;
  out.train = ensure_dataset(data, root / "train", data.train_count, data.train_seed);
  out.val = ensure_dataset(data, root / "val", data.val_count, data.val_seed);
  out.test = ensure_dataset(data, root / "test", data.test_count, data.test_seed);
  return out;
}

const SweptRun& ExperimentReport::run(const std::string& value) const {
  for (const auto& r : runs) {
    if (r.value == value) return r;
  }
  throw InvalidArgument("experiment report has no run for '" + value + "'");
}

std::vector<Verdict> compute_verdicts(const ExperimentConfig& cfg, const std::vector<SweptRun>& runs) {
  std::vector<Verdict> out;
  auto find = [&](const std::string& v) -> const SweptRun* {
    for (const auto& r : runs) {
      if (r.value == v) return &r;
    }
    return nullptr;
  };
  switch (cfg.kind) {
    case ExperimentKind::LossCompare: {
      const SweptRun* l2 = find("l2");
      const SweptRun* l4 = find("l4");
      if (l2 && l4) {
        out.push_back({"l2_orientation_exceeds_l4", l2->test.median_orientation_deg > l4->test.median_orientation_deg,
                       "median orientation l2 " + fmt(l2->test.median_orientation_deg) + " deg vs l4 " +
                           fmt(l4->test.median_orientation_deg) + " deg"});
      }
      bool structural = true;
      std::string detail;
      for (const char* name : {"l3", "l4"}) {
        const auto keys = train_config_keys(parse_loss_kind(name));
        bool ok = std::find(keys.begin(), keys.end(), "alpha") == keys.end();
        if (const SweptRun* r = find(name)) ok = ok && !r->train_config.contains("alpha");
        try {
          train_config_from_json(json{{"loss", name}, {"alpha", 1.0}});
          ok = false;
        } catch (const ConfigError&) {
        }
        structural = structural && ok;
        detail += std::string(name) + (ok ? ": no alpha; " : ": alpha present; ");
      }
      out.push_back({"l3_l4_have_no_alpha", structural, detail});
      break;
    }
    case ExperimentKind::DataQuantity: {
      std::vector<const SweptRun*> sorted;
      for (const auto& r : runs) sorted.push_back(&r);
      std::sort(sorted.begin(), sorted.end(),
                [](const SweptRun* a, const SweptRun* b) { return a->train_images < b->train_images; });
      if (sorted.size() < 2) break;
      struct Metric {
        const char* name;
        double ErrorStats::*field;
      };
      for (Metric m : {Metric{"median_position", &ErrorStats::median_position_cm},
                       Metric{"median_orientation", &ErrorStats::median_orientation_deg}}) {
        bool monotone = true;
        std::string detail;
        for (std::size_t i = 0; i < sorted.size(); ++i) {
          detail += std::to_string(sorted[i]->train_images) + ": " + fmt(sorted[i]->test.*m.field) + "  ";
          if (i > 0 && sorted[i]->test.*m.field > 1.1 * (sorted[i - 1]->test.*m.field)) monotone = false;
        }
        out.push_back({std::string(m.name) + "_non_increasing", monotone, detail});
        if (sorted.size() >= 3) {
          const std::size_t n = sorted.size();
          const double early = sorted[n - 3]->test.*m.field - sorted[n - 2]->test.*m.field;
          const double late = sorted[n - 2]->test.*m.field - sorted[n - 1]->test.*m.field;
          out.push_back({std::string(m.name) + "_plateau", late < early,
                         "improvement " + fmt(early) + " then " + fmt(late)});
        }
      }
      break;
    }
    case ExperimentKind::MaskVsObject: {
      const SweptRun* mask = find("mask");
      const SweptRun* shaded = find("shaded");
      if (mask && shaded) {
        out.push_back({"object_position_le_mask", shaded->test.median_position_cm <= mask->test.median_position_cm,
                       "median position object " + fmt(shaded->test.median_position_cm) + " cm vs mask " +
                           fmt(mask->test.median_position_cm) + " cm"});
        out.push_back({"object_orientation_le_mask",
                       shaded->test.median_orientation_deg <= mask->test.median_orientation_deg,
                       "median orientation object " + fmt(shaded->test.median_orientation_deg) + " deg vs mask " +
                           fmt(mask->test.median_orientation_deg) + " deg"});
      }
      break;
    }
    case ExperimentKind::OcclusionRobustness: {
      const SweptRun* base = nullptr;
      for (const auto& r : runs) {
        if (parse_radius(r.value) == 0.0) base = &r;
      }
      if (!base || !base->sweep) break;
      const SweepBin low = merge_bins(*base->sweep, 0.0, 0.05);
      const SweepBin high = merge_bins(*base->sweep, 0.10, 0.20);
      const bool ratio_ok = low.n > 0 && high.n > 0 && high.mean_orientation_deg >= 1.5 * low.mean_orientation_deg;
      out.push_back({"baseline_degrades_with_occlusion", ratio_ok,
                     "mean orientation 10-20%: " + fmt(high.mean_orientation_deg) + " deg (n=" +
                         std::to_string(high.n) + "), 0-5%: " + fmt(low.mean_orientation_deg) + " deg (n=" +
                         std::to_string(low.n) + ")"});
      for (const auto& r : runs) {
        if (&r == base || !r.sweep) continue;
        bool better = true;
        std::string detail;
        for (double lo : {0.05, 0.10, 0.15}) {
          const SweepBin a = merge_bins(*r.sweep, lo, lo + 0.05);
          const SweepBin b = merge_bins(*base->sweep, lo, lo + 0.05);
          const bool ok = a.n > 0 && b.n > 0 && a.mean_orientation_deg < b.mean_orientation_deg;
          better = better && ok;
          detail += fmt(lo * 100) + "%: " + fmt(a.mean_orientation_deg) + " vs " + fmt(b.mean_orientation_deg) + "; ";
        }
        out.push_back({"occlusion_trained_r" + r.value + "_more_robust", better, detail});
      }
      break;
    }
  }
  return out;
}

json to_json(const ExperimentReport& r) {
  json j = {{"experiment", to_string(r.kind)}, {"runs", json::array()}, {"verdicts", json::array()}};
  for (const auto& run : r.runs) {
    json row = {{"value", run.value},
                {"run_dir", run.run_dir.string()},
                {"train_images", run.train_images},
                {"epochs", run.epochs},
                {"selected_epoch", run.selected_epoch},
                {"train", run.train_config},
                {"test", to_json(run.test)}};
    if (run.sweep) row["sweep"] = to_json(*run.sweep);
    j["runs"].push_back(row);
  }
  for (const auto& v : r.verdicts) j["verdicts"].push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  return j;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  write_text(out_dir / "experiment.json", to_json(cfg).dump(2) + "\n");
  const ExperimentData data = prepare_data(cfg.data, cfg.cache_dir);

  int largest = cfg.data.train_count;
  if (cfg.kind == ExperimentKind::DataQuantity) {
    largest = 0;
    for (const auto& v : cfg.values) largest = std::max(largest, parse_count(v));
  }

  ExperimentReport report;
  report.kind = cfg.kind;
  for (const auto& value : cfg.values) {
    SweptRun run = execute_run(cfg, plan_run(cfg, value, largest), data);
    if (cfg.kind == ExperimentKind::OcclusionRobustness) {
      const NetworkParams<float> params = load_checkpoint(run.run_dir / "model.ckpt", cfg.net);
      run.sweep = sensitivity_sweep(params, DatasetView::all(data.test), cfg.sweep_radii, cfg.sweep_seed);
      write_sweep_csv(*run.sweep, out_dir / ("sweep_r" + value + ".csv"));
    }
    report.runs.push_back(std::move(run));
  }
  report.verdicts = compute_verdicts(cfg, report.runs);

  std::ostringstream table;
  table << "value,train_images,epochs,selected_epoch,median_pos_err_cm,median_ori_err_deg,mean_pos_err_cm,"
           "mean_ori_err_deg,success_rate\n";
  for (const auto& run : report.runs) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", run.value.c_str(), run.train_images,
                  run.epochs, run.selected_epoch, run.test.median_position_cm, run.test.median_orientation_deg,
                  run.test.mean_position_cm, run.test.mean_orientation_deg, run.test.success_rate);
    table << line;
  }
  write_text(out_dir / "table.csv", table.str());
  write_text(out_dir / "report.json", to_json(report).dump(2) + "\n");
  return report;
}

}  // namespace pinet
