#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pinet/dataset.hpp"
#include "pinet/network.hpp"

namespace pinet {

struct SweepSample {
  std::string id;
  double radius = 0.0;
  double amount = 0.0;
  double position_cm = 0.0;
  double orientation_deg = 0.0;
};

/// Samples with lo <= amount < hi (the last bin is closed). The unoccluded
/// row has lo = hi = 0.
struct SweepBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
  double mean_position_cm = 0.0;
  double mean_orientation_deg = 0.0;
};

struct SweepResult {
  std::vector<SweepSample> samples;  // radius-major, then view order
  std::vector<SweepBin> bins;        // unoccluded row first, then non-empty amount bins
};

/// Occludes every mask of the view once per radius (center uniform over the
/// boundary) and bins the errors by measured occlusion amount. Radius 0 means
/// no occlusion. Sample i at radius index k draws from
/// derive_rng(seed, k * 2^32 + i), so results do not depend on batching.
SweepResult sensitivity_sweep(const NetworkParams<float>& params, const DatasetView& view,
                              const std::vector<double>& radii, std::uint64_t seed, int bins = 20);

/// Bin for a sample that lost `cleared` of `total` pixels, out of `bins`
/// equal-width bins over [0, 1].
int amount_bin(std::size_t cleared, std::size_t total, int bins);

/// Columns bin_lo, bin_hi, n, mean_pos_err_cm, mean_ori_err_deg.
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
nlohmann::json to_json(const SweepResult& result);

/// The bin row covering [lo, hi), merged over all amount bins inside it.
SweepBin merge_bins(const SweepResult& result, double lo, double hi);

}  // namespace pinet
