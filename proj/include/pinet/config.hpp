#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "pinet/network.hpp"
#include "pinet/render.hpp"
#include "pinet/train.hpp"

namespace pinet {

inline constexpr int kConfigSchemaVersion = 1;

// JSON forms of the configuration structs. Parsing is strict: unknown keys
// and wrongly typed values throw ConfigError naming the key. Missing keys
// keep their defaults.

nlohmann::json to_json(const NetworkConfig& c);
nlohmann::json to_json(const TrainConfig& c);  // "alpha" only for losses that have one
nlohmann::json to_json(const CameraIntrinsics& c);
nlohmann::json to_json(const PoseSamplerConfig& c);

NetworkConfig network_config_from_json(const nlohmann::json& j);
/// "alpha" is rejected for L3 and L4, which have no weighting term.
TrainConfig train_config_from_json(const nlohmann::json& j);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
PoseSamplerConfig sampler_from_json(const nlohmann::json& j);

/// The keys a train config may carry for the given loss.
std::vector<std::string> train_config_keys(LossKind loss);

/// Applies "a.b.c=value". The value is parsed as JSON when possible and
/// taken as a string otherwise. Intermediate objects are created as needed.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, std::string_view where);

/// Reads a JSON file; ConfigError on parse failure, with the path.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace pinet
