#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pinet/checkpoint.hpp"
#include "pinet/error.hpp"
#include "pinet/network.hpp"
#include "pinet/render.hpp"
#include "pinet/train.hpp"
#include "test_support.hpp"

using namespace pinet;

namespace {

NetworkConfig toy_config(int classes = 2) {
  NetworkConfig cfg;
  cfg.input_width = 16;
  cfg.input_height = 12;
  cfg.channels = {2, 2};
  cfg.hidden = 8;
  cfg.num_classes = classes;
  cfg.seed = 3;
  return cfg;
}

MatX<double> random_masks(const NetworkConfig& cfg, int batch, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution bit(0.4);
  MatX<double> x(cfg.input_width * cfg.input_height, batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = bit(rng) ? 1.0 : 0.0;
  return x;
}

BatchTarget target_for(int class_id, std::uint64_t seed) {
  Rng rng(seed);
  BatchTarget t;
  t.class_id = class_id;
  t.target.position = {0.05, -0.02, 0.9};
  t.target.orientation = uniform_quaternion(rng);
  return t;
}

std::vector<Eigen::Matrix3Xd> clouds(int classes) {
  std::vector<Eigen::Matrix3Xd> out;
  for (int c = 0; c < classes; ++c) out.push_back(sample_surface(test_util::test_object(), 30, 50 + c).points);
  return out;
}

double max_abs(const NetworkParams<double>& p) {
  double m = 0.0;
  for (auto v : p.views()) {
    for (double x : v) m = std::max(m, std::abs(x));
  }
  return m;
}

template <typename Mat>
double head_max(const Mat& m, int rows_per_class, int c) {
  return m.middleRows(rows_per_class * c, rows_per_class).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(NetworkConfig, HeadsScaleWithClasses) {
  NetworkConfig cfg;
  cfg.num_classes = 5;
  const auto p = init_params<float>(cfg);
  EXPECT_EQ(p.pos_w.rows(), 15);
  EXPECT_EQ(p.ori_w.rows(), 20);
  EXPECT_EQ(p.fc_w.cols(), flat_size(cfg));
  EXPECT_EQ(flat_size(NetworkConfig{}), 1280);
}

TEST(NetworkConfig, SpatialCollapseIsConfigError) {
  NetworkConfig cfg;
  cfg.input_width = cfg.input_height = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(init_params<float>(cfg), ConfigError);
  cfg.input_width = cfg.input_height = 16;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(NetworkConfig, ConvShapes) {
  const auto shapes = conv_shapes(NetworkConfig{});
  ASSERT_EQ(shapes.size(), 4u);
  EXPECT_EQ(shapes[0].out_w, 40);
  EXPECT_EQ(shapes[0].out_h, 30);
  EXPECT_EQ(shapes[3].out_w, 5);
  EXPECT_EQ(shapes[3].out_h, 4);
  EXPECT_EQ(shapes[3].out_c, 64);
}

TEST(InitParams, DeterministicAndScaled) {
  NetworkConfig cfg;
  const auto a = init_params<float>(cfg), b = init_params<float>(cfg);
  const auto av = a.views(), bv = b.views();
  for (std::size_t t = 0; t < av.size(); ++t) {
    ASSERT_TRUE(std::equal(av[t].begin(), av[t].end(), bv[t].begin()));
  }
  EXPECT_TRUE(a.conv_b[0].isZero());
  EXPECT_TRUE(a.fc_b.isZero());
  EXPECT_TRUE(a.ori_b.isApprox(Eigen::Vector4f(1, 0, 0, 0)));
  // Sample std of the FC weights against sqrt(2 / fan_in).
  const double n = static_cast<double>(a.fc_w.size());
  const double var = a.fc_w.template cast<double>().squaredNorm() / n;
  EXPECT_NEAR(std::sqrt(var), std::sqrt(2.0 / flat_size(cfg)), 0.02 * std::sqrt(2.0 / flat_size(cfg)));
  cfg.seed = 1;
  EXPECT_FALSE(init_params<float>(cfg).fc_w == a.fc_w);
}

TEST(Forward, UnitQuaternionAndFiniteOnEmptyMask) {
  NetworkConfig cfg;
  cfg.num_classes = 3;
  const auto p = init_params<float>(cfg);
  const MaskImage empty(80, 60);
  const auto out = forward(p, empty, 0);
  EXPECT_TRUE(out.position.allFinite());
  EXPECT_NEAR(out.quaternion.norm(), 1.0, 1e-6);

  const auto object = test_util::test_object();
  const auto k = CameraIntrinsics().scaled(80, 60);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto mask = rasterize_silhouette(object, sample_pose({}, object, k, rng), k);
    EXPECT_NEAR(forward(p, mask, i % 3).quaternion.norm(), 1.0, 1e-6);
  }
}

TEST(Forward, ClassHeadsDiffer) {
  NetworkConfig cfg;
  cfg.num_classes = 2;
  const auto p = init_params<float>(cfg);
  const auto object = test_util::test_object();
  const auto k = CameraIntrinsics().scaled(80, 60);
  Rng rng(2);
  const auto mask = rasterize_silhouette(object, sample_pose({}, object, k, rng), k);
  const auto a = forward(p, mask, 0), b = forward(p, mask, 1);
  EXPECT_NE(a.position, b.position);
  EXPECT_NE(a.raw_quaternion, b.raw_quaternion);
  EXPECT_THROW(forward(p, mask, 2), RangeError);
  EXPECT_THROW(forward(p, mask, -1), RangeError);
  EXPECT_THROW(forward(p, MaskImage(40, 30), 0), RangeError);
}

TEST(Forward, BatchMatchesSingle) {
  const auto cfg = toy_config();
  const auto p = init_params<double>(cfg);
  const auto x = random_masks(cfg, 5, 4);
  const std::vector<int> classes = {0, 1, 1, 0, 1};
  const auto batch = predict_batch(p, x, classes);
  for (int i = 0; i < 5; ++i) {
    const auto single = forward(p, VecX<double>(x.col(i)), classes[i]);
    EXPECT_LE((single.position - batch[i].position).norm(), 1e-12);
    EXPECT_LE((single.raw_quaternion - batch[i].raw_quaternion).norm(), 1e-12);
  }
  EXPECT_THROW(predict_batch(p, x, std::vector<int>{0, 1}), ConfigError);
}

TEST(Forward, ZeroQuaternionIsNumericError) {
  auto p = init_params<float>(toy_config());
  p.ori_w.setZero();
  p.ori_b.setZero();
  EXPECT_THROW(forward(p, VecX<float>(VecX<float>::Zero(16 * 12)), 0), NumericError);
}

TEST(Backward, GradientMatchesFiniteDifferences) {
  for (auto loss : {LossKind::L1, LossKind::L2, LossKind::L3, LossKind::L4}) {
    EXPECT_LT(network_gradcheck(toy_config(), loss, 3, 11), 1e-3) << to_string(loss);
  }
}

TEST(Backward, OtherClassHeadsGetNoGradient) {
  const auto cfg = toy_config(3);
  const auto p = init_params<double>(cfg);
  const auto x = random_masks(cfg, 4, 5);
  std::vector<BatchTarget> targets;
  for (int i = 0; i < 4; ++i) targets.push_back(target_for(1, 100 + i));
  const auto cl = clouds(3);
  const auto g = backward(p, x, std::span<const BatchTarget>(targets), LossKind::L4,
                          std::span<const Eigen::Matrix3Xd>(cl), LossOptions{});
  for (int c : {0, 2}) {
    EXPECT_EQ(head_max(g.grad.pos_w, 3, c), 0.0);
    EXPECT_EQ(head_max(g.grad.ori_w, 4, c), 0.0);
    EXPECT_EQ(g.grad.pos_b.segment(3 * c, 3).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.grad.ori_b.segment(4 * c, 4).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_GT(head_max(g.grad.pos_w, 3, 1), 0.0);
  EXPECT_GT(head_max(g.grad.ori_w, 4, 1), 0.0);
}

TEST(Backward, DuplicateSampleDoublesContribution) {
  const auto cfg = toy_config();
  const auto p = init_params<double>(cfg);
  const auto cl = clouds(2);
  const MatX<double> x1 = random_masks(cfg, 1, 6);
  MatX<double> x2(x1.rows(), 2);
  x2 << x1, x1;
  const std::vector<BatchTarget> t1 = {target_for(0, 7)}, t2 = {t1[0], t1[0]};
  for (auto loss : {LossKind::L2, LossKind::L3}) {
    const auto g1 = backward(p, x1, std::span<const BatchTarget>(t1), loss, std::span<const Eigen::Matrix3Xd>(cl),
                             LossOptions{});
    const auto g2 = backward(p, x2, std::span<const BatchTarget>(t2), loss, std::span<const Eigen::Matrix3Xd>(cl),
                             LossOptions{});
    EXPECT_DOUBLE_EQ(g2.loss_sum, 2.0 * g1.loss_sum);
    auto v1 = g1.grad.views();
    auto v2 = g2.grad.views();
    double worst = 0.0, scale = 0.0;
    for (std::size_t t = 0; t < v1.size(); ++t) {
      for (std::size_t i = 0; i < v1[t].size(); ++i) {
        worst = std::max(worst, std::abs(v2[t][i] - 2.0 * v1[t][i]));
        scale = std::max(scale, std::abs(v1[t][i]));
      }
    }
    EXPECT_LE(worst, 1e-12 * scale) << to_string(loss);
  }
}

TEST(Backward, ShapeMismatchIsConfigError) {
  const auto cfg = toy_config();
  const auto p = init_params<double>(cfg);
  const auto cl = clouds(2);
  const auto x = random_masks(cfg, 2, 8);
  const std::vector<BatchTarget> one = {target_for(0, 1)};
  EXPECT_THROW(backward(p, x, std::span<const BatchTarget>(one), LossKind::L3,
                        std::span<const Eigen::Matrix3Xd>(cl), LossOptions{}),
               ConfigError);
  const std::vector<Eigen::Matrix3Xd> too_few = {cl[0]};
  const std::vector<BatchTarget> two = {target_for(0, 1), target_for(1, 2)};
  EXPECT_THROW(backward(p, x, std::span<const BatchTarget>(two), LossKind::L3,
                        std::span<const Eigen::Matrix3Xd>(too_few), LossOptions{}),
               ConfigError);
}

TEST(Params, CastAndViews) {
  const auto p = init_params<float>(toy_config());
  const auto d = p.cast<double>();
  EXPECT_EQ(p.parameter_count(), d.parameter_count());
  EXPECT_EQ(p.names().size(), p.views().size());
  EXPECT_EQ(p.names().front(), "conv0.weight");
  EXPECT_EQ(p.names().back(), "orientation.bias");
  EXPECT_TRUE(d.cast<float>().fc_w == p.fc_w);
  EXPECT_EQ(max_abs(NetworkParams<double>::zeros(toy_config())), 0.0);
}

TEST(Schedule, DefaultDecays) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 1), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 7), 0.01);
  EXPECT_NEAR(learning_rate_at(cfg, 8), 0.001, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 14), 0.001, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 15), 0.0001, 1e-15);
  EXPECT_EQ(cfg.batch_size, 32);
  EXPECT_DOUBLE_EQ(cfg.weight_decay, 1e-4);
}

TEST(Optimizer, ZeroGradientShrinksByDecayFactor) {
  auto p = init_params<double>(toy_config());
  const auto before = p;
  const auto zero = NetworkParams<double>::zeros(p.config);
  SgdMomentum<double> opt(p, 0.9, 1e-4);
  const double lr = 0.01;
  for (int s = 0; s < 3; ++s) opt.step(p, zero, lr);
  const double f = std::pow(1.0 - lr * 1e-4, 3);
  EXPECT_LE((p.fc_w - f * before.fc_w).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((p.ori_w - f * before.ori_w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Optimizer, MomentumUpdate) {
  auto p = NetworkParams<double>::zeros(toy_config());
  auto g = NetworkParams<double>::zeros(p.config);
  g.fc_b.setConstant(1.0);
  SgdMomentum<double> opt(p, 0.5, 0.0);
  opt.step(p, g, 0.1);  // v = 1, p = -0.1
  opt.step(p, g, 0.1);  // v = 1.5, p = -0.25
  EXPECT_NEAR(p.fc_b[0], -0.25, 1e-15);
}

TEST(PredictFile, RoundTripAndErrors) {
  test_util::TempDir dir("predict");
  NetworkConfig cfg;
  const auto p = init_params<float>(cfg);
  const auto object = test_util::test_object();
  const auto k = CameraIntrinsics().scaled(80, 60);
  Rng rng(3);
  const auto mask = rasterize_silhouette(object, sample_pose({}, object, k, rng), k);
  const auto path = dir / "mask.pgm";
  write_pgm(mask, path);
  const auto a = predict_file(p, path, 0);
  const auto b = forward(p, mask, 0);
  EXPECT_EQ(a.position, b.position);
  EXPECT_EQ(a.raw_quaternion, b.raw_quaternion);
  EXPECT_THROW(predict_file(p, path, 1), RangeError);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 100);
  EXPECT_THROW(predict_file(p, path, 0), FormatError);

  write_pgm(MaskImage(40, 30), dir / "small.pgm");
  EXPECT_THROW(predict_file(p, dir / "small.pgm", 0), FormatError);
}

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test_util::TempDir("train");
    const auto manifest = test_util::make_dataset(dir_->path(), "ds", {200}, 21);
    data_ = load_dataset(manifest);
  }
  static void TearDownTestSuite() {
    data_.reset();
    delete dir_;
  }
  static test_util::TempDir* dir_;
  static std::shared_ptr<const Dataset> data_;
};
test_util::TempDir* TrainingTest::dir_ = nullptr;
std::shared_ptr<const Dataset> TrainingTest::data_;

TEST_F(TrainingTest, SmokeRunLossDecreases) {
  TrainConfig tc;
  tc.epochs = 2;
  const auto r = train(DatasetView::all(data_), std::nullopt, NetworkConfig{}, tc);
  ASSERT_EQ(r.log.epochs.size(), 2u);
  EXPECT_LT(r.log.epochs[1].mean_loss, r.log.epochs[0].mean_loss);
  EXPECT_TRUE(r.params.all_finite());
}

TEST_F(TrainingTest, BitReproducible) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.occlusion_max_radius = 6;
  const auto a = train(DatasetView::all(data_), std::nullopt, NetworkConfig{}, tc);
  const auto b = train(DatasetView::all(data_), std::nullopt, NetworkConfig{}, tc);
  const auto av = a.params.views(), bv = b.params.views();
  for (std::size_t t = 0; t < av.size(); ++t) {
    ASSERT_TRUE(std::equal(av[t].begin(), av[t].end(), bv[t].begin())) << a.params.names()[t];
  }
  EXPECT_EQ(a.log.epochs[0].mean_loss, b.log.epochs[0].mean_loss);
}

TEST_F(TrainingTest, UnusedHeadOnlyDecays) {
  NetworkConfig nc;
  nc.num_classes = 2;
  TrainConfig tc;
  tc.epochs = 2;
  tc.decay_epochs = {1};
  const auto init = init_params<float>(nc);
  const auto r = train(DatasetView::all(data_), std::nullopt, nc, tc);
  const std::size_t steps = (data_->size() + tc.batch_size - 1) / tc.batch_size;
  MatX<float> expected_pos = init.pos_w.middleRows(3, 3);
  MatX<float> expected_ori = init.ori_w.middleRows(4, 4);
  for (int e = 1; e <= tc.epochs; ++e) {
    const float shrink = static_cast<float>(1.0 - learning_rate_at(tc, e) * tc.weight_decay);
    for (std::size_t s = 0; s < steps; ++s) {
      expected_pos *= shrink;
      expected_ori *= shrink;
    }
  }
  EXPECT_TRUE(r.params.pos_w.middleRows(3, 3) == expected_pos);
  EXPECT_TRUE(r.params.ori_w.middleRows(4, 4) == expected_ori);
  EXPECT_FALSE(r.params.pos_w.middleRows(0, 3) == init.pos_w.middleRows(0, 3));
}

TEST_F(TrainingTest, CallbackAndHeldout) {
  TrainConfig tc;
  tc.epochs = 2;
  const auto [tr, va] = split(DatasetView::all(data_), 0.8, 1);
  std::vector<int> seen;
  const auto r = train(tr, va, NetworkConfig{}, tc,
                       [&](const EpochLog& log, const NetworkParams<float>& p) {
                         seen.push_back(log.epoch);
                         EXPECT_TRUE(p.all_finite());
                       });
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  ASSERT_TRUE(r.log.epochs[1].heldout.has_value());
  EXPECT_EQ(r.log.epochs[1].heldout->count, va.size());
  EXPECT_DOUBLE_EQ(r.log.epochs[0].learning_rate, 0.01);
}

TEST_F(TrainingTest, Errors) {
  TrainConfig tc;
  DatasetView empty{data_, {}};
  EXPECT_THROW(train(empty, std::nullopt, NetworkConfig{}, tc), InvalidArgument);
  tc.learning_rate = 0.0;
  EXPECT_THROW(train(DatasetView::all(data_), std::nullopt, NetworkConfig{}, tc), ConfigError);
  tc = {};
  tc.input = InputKind::Shaded;
  EXPECT_THROW(train(DatasetView::all(data_), std::nullopt, NetworkConfig{}, tc), ConfigError);
  NetworkConfig wrong;
  wrong.input_width = 64;
  EXPECT_THROW(train(DatasetView::all(data_), std::nullopt, wrong, TrainConfig{}), ConfigError);
}

TEST_F(TrainingTest, CheckpointRoundTrip) {
  const auto p = init_params<float>(NetworkConfig{});
  const auto path = dir_->path() / "model.ckpt";
  save_checkpoint(p, path);
  const auto q = load_checkpoint(path, p.config);
  const auto pv = p.views(), qv = q.views();
  for (std::size_t t = 0; t < pv.size(); ++t) {
    ASSERT_TRUE(std::equal(pv[t].begin(), pv[t].end(), qv[t].begin()));
  }
  NetworkConfig other;
  other.num_classes = 2;
  EXPECT_THROW(load_checkpoint(path, other), ConfigError);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
