#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pinet/error.hpp"
#include "pinet/eval.hpp"
#include "pinet/occlusion.hpp"
#include "pinet/render.hpp"
#include "pinet/sweep.hpp"
#include "pinet/train.hpp"
#include "test_support.hpp"

using namespace pinet;

namespace {

MaskImage square(int w, int h, int u0, int v0, int side) {
  MaskImage m(w, h);
  for (int v = v0; v < v0 + side; ++v) {
    for (int u = u0; u < u0 + side; ++u) m.at(u, v) = 1;
  }
  return m;
}

bool subset(const MaskImage& a, const MaskImage& b) {
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (a.pixels[i] && !b.pixels[i]) return false;
  }
  return true;
}

MaskImage object_mask(std::uint64_t seed) {
  const auto object = test_util::test_object();
  const auto k = CameraIntrinsics().scaled(80, 60);
  Rng rng(seed);
  return rasterize_silhouette(object, sample_pose({}, object, k, rng), k);
}

}  // namespace

TEST(BoundaryPoints, Examples) {
  MaskImage one(10, 10);
  one.at(4, 6) = 1;
  EXPECT_EQ(boundary_points(one), (std::vector<Pixel>{{4, 6}}));

  const auto sq = square(30, 30, 10, 10, 10);
  const auto b = boundary_points(sq);
  EXPECT_EQ(b.size(), 36u);
  for (const auto& p : b) {
    EXPECT_TRUE(p.u == 10 || p.u == 19 || p.v == 10 || p.v == 19);
  }
  EXPECT_THROW(boundary_points(MaskImage(10, 10)), EmptyMask);
}

TEST(BoundaryPoints, ImageBorderCountsAsUnset) {
  MaskImage full(5, 4);
  std::fill(full.pixels.begin(), full.pixels.end(), 1);
  EXPECT_EQ(boundary_points(full).size(), 2u * 5 + 2u * 2);
  EXPECT_TRUE(on_boundary(full, {0, 2}));
  EXPECT_FALSE(on_boundary(full, {2, 2}));
}

TEST(ApplyOcclusion, Examples) {
  MaskImage one(10, 10);
  one.at(4, 6) = 1;
  OcclusionSpec spec;
  spec.center = {4, 6};
  spec.radius = 1.0;
  EXPECT_EQ(apply_occlusion(one, spec).count_nonzero(), 0u);

  const auto sq = square(40, 40, 10, 10, 10);
  spec.center = {10, 14};
  spec.radius = 3.0;
  const auto occ = apply_occlusion(sq, spec);
  EXPECT_TRUE(subset(occ, sq));
  // Disc of radius 3 around a left-edge pixel, cut by the edge: columns 10..13.
  std::size_t cleared = 0;
  for (int v = 10; v < 20; ++v) {
    for (int u = 10; u < 20; ++u) {
      const double d2 = (u - 10) * (u - 10) + (v - 14) * (v - 14);
      cleared += d2 <= 9.0;
      EXPECT_EQ(occ.at(u, v), d2 <= 9.0 ? 0 : 1);
    }
  }
  EXPECT_EQ(sq.count_nonzero() - occ.count_nonzero(), cleared);

  spec.radius = 15.0;  // more than the square's diameter
  EXPECT_EQ(apply_occlusion(sq, spec).count_nonzero(), 0u);
}

TEST(ApplyOcclusion, InvalidSpec) {
  const auto sq = square(40, 40, 10, 10, 10);
  OcclusionSpec spec;
  spec.center = {15, 15};  // interior
  EXPECT_THROW(apply_occlusion(sq, spec), InvalidArgument);
  spec.center = {10, 10};
  spec.radius = 0.5;
  EXPECT_THROW(apply_occlusion(sq, spec), InvalidArgument);
}

TEST(OcclusionAmount, Examples) {
  const auto sq = square(40, 40, 10, 10, 10);
  EXPECT_DOUBLE_EQ(occlusion_amount(sq, sq), 0.0);
  EXPECT_DOUBLE_EQ(occlusion_amount(sq, MaskImage(40, 40)), 1.0);
  auto partial = sq;
  for (int v = 10; v < 13; ++v) {
    for (int u = 10; u < 20; ++u) partial.at(u, v) = 0;
  }
  EXPECT_DOUBLE_EQ(occlusion_amount(sq, partial), 0.3);
  auto extra = sq;
  extra.at(0, 0) = 1;
  EXPECT_THROW(occlusion_amount(sq, extra), InvalidArgument);
  EXPECT_THROW(occlusion_amount(MaskImage(40, 40), MaskImage(40, 40)), EmptyMask);
  EXPECT_THROW(occlusion_amount(sq, MaskImage(20, 20)), InvalidArgument);
}

TEST(RandomOcclusion, PropertiesOnObjectMasks) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto mask = object_mask(100 + i);
    const auto spec = random_occlusion(mask, 6.0, rng);
    EXPECT_GE(spec.radius, 1.0);
    EXPECT_LE(spec.radius, 6.0);
    EXPECT_TRUE(on_boundary(mask, spec.center));
    const auto occ = apply_occlusion(mask, spec);
    EXPECT_TRUE(subset(occ, mask));
    const double a = occlusion_amount(mask, occ);
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(RandomOcclusion, DeterministicAndCenterUniform) {
  const auto sq = square(40, 40, 10, 10, 10);
  Rng a(3), b(3);
  std::vector<int> hits(36, 0);
  const int n = 36000;
  for (int i = 0; i < n; ++i) {
    const auto sa = boundary_occlusion(sq, 2.0, a);
    const auto sb = boundary_occlusion(sq, 2.0, b);
    ASSERT_EQ(sa.center, sb.center);
    ++hits[sa.boundary_index];
  }
  // Chi-square with 35 degrees of freedom, upper 1% point 57.34.
  double x = 0.0;
  for (int h : hits) x += (h - 1000.0) * (h - 1000.0) / 1000.0;
  EXPECT_LT(x, 57.34);
}

TEST(ScaleRadius, ReferenceWidth) {
  EXPECT_DOUBLE_EQ(scale_radius(24, 320, 80), 6.0);
  EXPECT_DOUBLE_EQ(scale_radius(12, 320, 80), 3.0);
}

TEST(AmountBin, IntegerEdges) {
  EXPECT_EQ(amount_bin(0, 100, 20), 0);
  EXPECT_EQ(amount_bin(4, 100, 20), 0);
  EXPECT_EQ(amount_bin(5, 100, 20), 1);
  EXPECT_EQ(amount_bin(10, 100, 20), 2);
  EXPECT_EQ(amount_bin(100, 100, 20), 19);  // last bin is closed
  EXPECT_EQ(amount_bin(1, 3, 20), 6);
}

class SweepTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test_util::TempDir("sweep");
    data_ = load_dataset(test_util::make_dataset(dir_->path(), "ds", {40}, 5));
  }
  static void TearDownTestSuite() {
    data_.reset();
    delete dir_;
  }
  static test_util::TempDir* dir_;
  static std::shared_ptr<const Dataset> data_;
};
test_util::TempDir* SweepTest::dir_ = nullptr;
std::shared_ptr<const Dataset> SweepTest::data_;

TEST_F(SweepTest, UnoccludedRowMatchesPlainEvaluation) {
  const auto params = init_params<float>(NetworkConfig{});
  const auto view = DatasetView::all(data_);
  const auto sweep = sensitivity_sweep(params, view, {0, 2, 4}, 9);
  const auto plain = aggregate(evaluate_view(params, view, InputKind::Mask));
  ASSERT_FALSE(sweep.bins.empty());
  const auto& row = sweep.bins.front();
  EXPECT_EQ(row.lo, 0.0);
  EXPECT_EQ(row.hi, 0.0);
  EXPECT_EQ(row.n, view.size());
  EXPECT_EQ(row.mean_position_cm, plain.overall.mean_position_cm);
  EXPECT_EQ(row.mean_orientation_deg, plain.overall.mean_orientation_deg);
  EXPECT_EQ(sweep.samples.size(), 3 * view.size());
}

TEST_F(SweepTest, DeterministicAndConsistentBins) {
  const auto params = init_params<float>(NetworkConfig{});
  const auto view = DatasetView::all(data_);
  const auto a = sensitivity_sweep(params, view, {1, 3, 6}, 4);
  const auto b = sensitivity_sweep(params, view, {1, 3, 6}, 4);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].amount, b.samples[i].amount);
    EXPECT_EQ(a.samples[i].orientation_deg, b.samples[i].orientation_deg);
  }
  std::size_t total = 0;
  for (const auto& bin : a.bins) {
    EXPECT_GT(bin.n, 0u);
    total += bin.n;
  }
  EXPECT_EQ(total, a.samples.size());

  const auto c = sensitivity_sweep(params, view, {1, 3, 6}, 5);
  bool differs = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) differs |= a.samples[i].amount != c.samples[i].amount;
  EXPECT_TRUE(differs);

  // Larger radii clear at least as much on average.
  double small = 0.0, large = 0.0;
  for (const auto& s : a.samples) {
    if (s.radius == 1) small += s.amount;
    if (s.radius == 6) large += s.amount;
  }
  EXPECT_LT(small, large);
}

TEST_F(SweepTest, MergeBinsAndCsv) {
  const auto params = init_params<float>(NetworkConfig{});
  const auto view = DatasetView::all(data_);
  const auto r = sensitivity_sweep(params, view, {0, 1, 2, 3, 4, 5, 6}, 1);
  const auto all = merge_bins(r, 0.0, 1.0);
  EXPECT_EQ(all.n, 6 * view.size());  // the unoccluded row is not merged
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : r.samples) {
    if (s.radius > 0 && s.amount >= 0.05 && s.amount < 0.2) {
      sum += s.orientation_deg;
      ++n;
    }
  }
  const auto mid = merge_bins(r, 0.05, 0.2);
  EXPECT_EQ(mid.n, n);
  ASSERT_GT(n, 0u);
  EXPECT_NEAR(mid.mean_orientation_deg, sum / n, 1e-9);

  const auto path = dir_->path() / "sweep.csv";
  write_sweep_csv(r, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "bin_lo,bin_hi,n,mean_pos_err_cm,mean_ori_err_deg");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, r.bins.size());
}
