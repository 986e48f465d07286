#include "pinet/config.hpp"

#include <algorithm>
#include <fstream>

namespace pinet {

using nlohmann::json;

namespace {

std::string qualified(std::string_view where, std::string_view key) {
  return std::string(where) + "." + std::string(key);
}

void read(const json& j, std::string_view where, const char* key, double& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(qualified(where, key) + ": expected a number");
  out = v.get<double>();
}

void read(const json& j, std::string_view where, const char* key, int& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(qualified(where, key) + ": expected an integer");
  out = v.get<int>();
}

void read(const json& j, std::string_view where, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(qualified(where, key) + ": expected a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read(const json& j, std::string_view where, const char* key, std::vector<int>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(qualified(where, key) + ": expected an array of integers");
  out.clear();
  for (const json& e : v) {
    if (!e.is_number_integer()) throw ConfigError(qualified(where, key) + ": expected an array of integers");
    out.push_back(e.get<int>());
  }
}

const std::string* read_string(const json& j, std::string_view where, const char* key) {
  if (!j.contains(key)) return nullptr;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(qualified(where, key) + ": expected a string");
  return v.get_ptr<const std::string*>();
}

}  // namespace

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key '" + qualified(where, key) + "'");
    }
  }
}

json to_json(const NetworkConfig& c) {
  return {{"input_width", c.input_width}, {"input_height", c.input_height}, {"channels", c.channels},
          {"hidden", c.hidden},           {"num_classes", c.num_classes},   {"seed", c.seed}};
}

NetworkConfig network_config_from_json(const json& j) {
  check_keys(j, {"input_width", "input_height", "channels", "hidden", "num_classes", "seed"}, "net");
  NetworkConfig c;
  read(j, "net", "input_width", c.input_width);
  read(j, "net", "input_height", c.input_height);
  read(j, "net", "channels", c.channels);
  read(j, "net", "hidden", c.hidden);
  read(j, "net", "num_classes", c.num_classes);
  read(j, "net", "seed", c.seed);
  c.validate();
  return c;
}

std::vector<std::string> train_config_keys(LossKind loss) {
  std::vector<std::string> keys = {"loss",         "batch_size", "weight_decay",    "learning_rate",
                                   "decay_epochs", "decay_factor", "epochs",        "momentum",
                                   "point_reduction", "input",   "occlusion_max_radius", "seed"};
  if (uses_alpha(loss)) keys.push_back("alpha");
  return keys;
}

json to_json(const TrainConfig& c) {
  json j = {{"loss", to_string(c.loss)},
            {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay},
            {"learning_rate", c.learning_rate},
            {"decay_epochs", c.decay_epochs},
            {"decay_factor", c.decay_factor},
            {"epochs", c.epochs},
            {"momentum", c.momentum},
            {"point_reduction", c.point_reduction == PointReduction::Sum ? "sum" : "mean"},
            {"input", to_string(c.input)},
            {"occlusion_max_radius", c.occlusion_max_radius},
            {"seed", c.seed}};
  if (uses_alpha(c.loss)) j["alpha"] = c.alpha;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  TrainConfig c;
  if (const std::string* s = read_string(j, "train", "loss")) {
    try {
      c.loss = parse_loss_kind(*s);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("train.loss: ") + e.what());
    }
  }
  const std::vector<std::string> keys = train_config_keys(c.loss);
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
    if (key == "alpha") {
      throw ConfigError("train.alpha: the " + to_string(c.loss) + " loss has no weighting term");
    }
    throw ConfigError("unknown config key 'train." + key + "'");
  }
  read(j, "train", "batch_size", c.batch_size);
  read(j, "train", "weight_decay", c.weight_decay);
  read(j, "train", "learning_rate", c.learning_rate);
  read(j, "train", "decay_epochs", c.decay_epochs);
  read(j, "train", "decay_factor", c.decay_factor);
  read(j, "train", "epochs", c.epochs);
  read(j, "train", "momentum", c.momentum);
  read(j, "train", "alpha", c.alpha);
  read(j, "train", "occlusion_max_radius", c.occlusion_max_radius);
  read(j, "train", "seed", c.seed);
  if (const std::string* s = read_string(j, "train", "point_reduction")) {
    if (*s == "sum") {
      c.point_reduction = PointReduction::Sum;
    } else if (*s == "mean") {
      c.point_reduction = PointReduction::Mean;
    } else {
      throw ConfigError("train.point_reduction: expected 'sum' or 'mean'");
    }
  }
  if (const std::string* s = read_string(j, "train", "input")) c.input = parse_input_kind(*s);
  c.validate();
  return c;
}

json to_json(const CameraIntrinsics& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  check_keys(j, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
  CameraIntrinsics c;
  read(j, "intrinsics", "fx", c.fx);
  read(j, "intrinsics", "fy", c.fy);
  read(j, "intrinsics", "cx", c.cx);
  read(j, "intrinsics", "cy", c.cy);
  read(j, "intrinsics", "width", c.width);
  read(j, "intrinsics", "height", c.height);
  c.validate();
  return c;
}

json to_json(const PoseSamplerConfig& c) {
  return {{"z_min", c.z_min},
          {"z_max", c.z_max},
          {"lateral_margin", c.lateral_margin},
          {"min_pixels", c.min_pixels},
          {"seed", c.seed}};
}

PoseSamplerConfig sampler_from_json(const json& j) {
  check_keys(j, {"z_min", "z_max", "lateral_margin", "min_pixels", "seed"}, "sampler");
  PoseSamplerConfig c;
  read(j, "sampler", "z_min", c.z_min);
  read(j, "sampler", "z_max", c.z_max);
  read(j, "sampler", "lateral_margin", c.lateral_margin);
  read(j, "sampler", "min_pixels", c.min_pixels);
  read(j, "sampler", "seed", c.seed);
  c.validate();
  return c;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key.path=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + path + "' has an empty key");
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError("override '" + path + "': '" + key + "' is inside a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return j;
}

}  // namespace pinet
