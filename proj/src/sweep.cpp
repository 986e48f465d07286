#include "pinet/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "pinet/eval.hpp"
#include "pinet/occlusion.hpp"

namespace pinet {

int amount_bin(std::size_t cleared, std::size_t total, int bins) {
  if (total == 0) throw EmptyMask("amount_bin: empty original mask");
  if (bins < 1) throw InvalidArgument("amount_bin: need at least one bin");
  // Integer arithmetic so that amounts on a bin edge land in the upper bin.
  const auto k = static_cast<int>((cleared * static_cast<std::size_t>(bins)) / total);
  return std::min(k, bins - 1);
}

SweepResult sensitivity_sweep(const NetworkParams<float>& params, const DatasetView& view,
                              const std::vector<double>& radii, std::uint64_t seed, int bins) {
  if (view.empty()) throw InvalidArgument("sweep: empty test set");
  if (radii.empty()) throw InvalidArgument("sweep: no radii given");
  if (bins < 1) throw InvalidArgument("sweep: need at least one bin");
  for (double r : radii) {
    if (r != 0.0 && !(r >= 1.0)) throw InvalidArgument("sweep: radius must be 0 (no occlusion) or >= 1");
  }
  const Dataset& d = *view.data;
  const auto pixels = static_cast<Eigen::Index>(d.manifest.intrinsics.width) * d.manifest.intrinsics.height;

  SweepResult out;
  struct Acc {
    std::size_t n = 0;
    double pos = 0.0, ori = 0.0;
  };
  Acc unoccluded;
  std::vector<Acc> acc(static_cast<std::size_t>(bins));
  bool any_unoccluded = false;

  constexpr std::size_t kChunk = 128;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double radius = radii[k];
    for (std::size_t begin = 0; begin < view.size(); begin += kChunk) {
      const std::size_t end = std::min(view.size(), begin + kChunk);
      MatX<float> inputs(pixels, static_cast<Eigen::Index>(end - begin));
      std::vector<int> classes;
      std::vector<std::size_t> cleared(end - begin, 0), total(end - begin, 0);
      for (std::size_t i = begin; i < end; ++i) {
        const MaskImage& original = d.masks[view.indices[i]];
        const auto col = static_cast<Eigen::Index>(i - begin);
        classes.push_back(view.record(i).class_id);
        total[i - begin] = original.count_nonzero();
        if (radius == 0.0) {
          inputs.col(col) = to_input<float>(original);
          continue;
        }
        Rng rng = derive_rng(seed, (static_cast<std::uint64_t>(k) << 32) + static_cast<std::uint64_t>(i));
        const MaskImage occluded = apply_occlusion(original, boundary_occlusion(original, radius, rng));
        cleared[i - begin] = total[i - begin] - occluded.count_nonzero();
        inputs.col(col) = to_input<float>(occluded);
      }
      const auto preds = predict_batch(params, inputs, std::span<const int>(classes));
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t j = i - begin;
        const EvalRecord rec = make_record(view.record(i).id, preds[j], view.record(i).pose);
        SweepSample s;
        s.id = rec.sample_id;
        s.radius = radius;
        s.amount = static_cast<double>(cleared[j]) / static_cast<double>(total[j]);
        s.position_cm = rec.position_cm;
        s.orientation_deg = rec.orientation_deg;
        out.samples.push_back(s);
        Acc& a = radius == 0.0 ? unoccluded : acc[static_cast<std::size_t>(amount_bin(cleared[j], total[j], bins))];
        any_unoccluded = any_unoccluded || radius == 0.0;
        ++a.n;
        a.pos += s.position_cm;
        a.ori += s.orientation_deg;
      }
    }
  }

  auto row = [](double lo, double hi, const Acc& a) {
    SweepBin b;
    b.lo = lo;
    b.hi = hi;
    b.n = a.n;
    b.mean_position_cm = a.pos / static_cast<double>(a.n);
    b.mean_orientation_deg = a.ori / static_cast<double>(a.n);
    return b;
  };
  if (any_unoccluded) out.bins.push_back(row(0.0, 0.0, unoccluded));
  for (int b = 0; b < bins; ++b) {
    const Acc& a = acc[static_cast<std::size_t>(b)];
    if (a.n > 0) out.bins.push_back(row(static_cast<double>(b) / bins, static_cast<double>(b + 1) / bins, a));
  }
  return out;
}

SweepBin merge_bins(const SweepResult& result, double lo, double hi) {
  SweepBin m;
  m.lo = lo;
  m.hi = hi;
  double pos = 0.0, ori = 0.0;
  for (const SweepBin& b : result.bins) {
    if (b.hi == 0.0 || b.lo < lo - 1e-12 || b.hi > hi + 1e-12) continue;
    m.n += b.n;
    pos += b.mean_position_cm * static_cast<double>(b.n);
    ori += b.mean_orientation_deg * static_cast<double>(b.n);
  }
  if (m.n > 0) {
    m.mean_position_cm = pos / static_cast<double>(m.n);
    m.mean_orientation_deg = ori / static_cast<double>(m.n);
  }
  return m;
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "bin_lo,bin_hi,n,mean_pos_err_cm,mean_ori_err_deg\n";
  char line[160];
  for (const SweepBin& b : result.bins) {
    std::snprintf(line, sizeof line, "%.2f,%.2f,%zu,%.6f,%.6f\n", b.lo, b.hi, b.n, b.mean_position_cm,
                  b.mean_orientation_deg);
    f << line;
  }
}

nlohmann::json to_json(const SweepResult& result) {
  nlohmann::json j = nlohmann::json::array();
  for (const SweepBin& b : result.bins) {
    j.push_back({{"bin_lo", b.lo},
                 {"bin_hi", b.hi},
                 {"n", b.n},
                 {"mean_pos_err_cm", b.mean_position_cm},
                 {"mean_ori_err_deg", b.mean_orientation_deg}});
  }
  return j;
}

}  // namespace pinet
