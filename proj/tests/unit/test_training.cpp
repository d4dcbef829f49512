#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "blindspot/checkpoint.hpp"
#include "blindspot/distill.hpp"
#include "blindspot/errors.hpp"
#include "blindspot/metrics.hpp"
#include "blindspot/noise_model.hpp"
#include "blindspot/optimizer.hpp"
#include "blindspot/real_pipeline.hpp"
#include "blindspot/stage1.hpp"
#include "blindspot/synthetic.hpp"

namespace blindspot {
namespace {

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig cfg = TrainConfig::desk();
  cfg.patch_size = 24;
  cfg.patches_per_epoch = 8;
  cfg.epochs = 2;
  cfg.seed = seed;
  return cfg;
}

const DbsnConfig kTinyNet{1, 4, 1};

std::vector<NoisyImage> noisy_set(std::size_t n, std::size_t size) {
  std::vector<NoisyImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor x = synthetic_scene(1, size, size, 40 + i);
    out.push_back({"n" + std::to_string(i), synthesize(NoiseLevelFunction{AwgnNoise{25.0}}, x, 50 + i)});
  }
  return out;
}

std::string stage1_bytes(const Stage1Model& m) {
  std::ostringstream os;
  write_stage1(os, m);
  return os.str();
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p({3, 2}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  const std::vector<double> before = p.storage();
  Adam adam;
  p.grad().assign(p.numel(), 0.0);
  for (int i = 0; i < 5; ++i) adam.step(p, 1e-2);
  EXPECT_EQ(p.storage(), before);
  Tensor q({2}, {1.0, 2.0});
  adam.step(q, 1e-2);  // no gradient buffer at all
  EXPECT_EQ(q.storage(), (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p({2}, {1.0, 1.0});
  p.grad() = {0.5, -3.0};
  Adam adam;
  adam.step(p, 0.01);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], 1.01, 1e-9);
}

TEST(LrSchedule, StepDecayWithFloor) {
  const LrSchedule s{1e-3, 0.1, 5, 3e-7};
  // Epochs are counted from 0.
  EXPECT_DOUBLE_EQ(s.at(0), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(4), 1e-3);
  EXPECT_DOUBLE_EQ(s.at(5), 1e-4);
  EXPECT_DOUBLE_EQ(s.at(100), 3e-7);
  for (std::size_t e = 1; e < 60; ++e) EXPECT_LE(s.at(e + 1), s.at(e));
  EXPECT_THROW((LrSchedule{-1.0, 0.1, 5, 0.0}.validate()), ConfigError);
}

TEST(TrainConfig, PresetsAndOverrides) {
  EXPECT_EQ(TrainConfig::paper().patch_size, 96u);
  EXPECT_EQ(TrainConfig::paper().epochs, 180u);
  std::istringstream in("patch_size = 48\nlr = 0.002\nlambda = 0.5\nseed = 9\n");
  TrainConfig cfg = TrainConfig::desk();
  cfg.apply(ConfigMap::parse(in));
  EXPECT_EQ(cfg.patch_size, 48u);
  EXPECT_DOUBLE_EQ(cfg.lr.initial, 0.002);
  EXPECT_DOUBLE_EQ(cfg.lambda_distill, 0.5);
  EXPECT_EQ(cfg.seed, 9u);
  std::istringstream bad("patchsize = 3\n");
  EXPECT_THROW(cfg.apply(ConfigMap::parse(bad)), ConfigError);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Stage1, FixedSeedGivesIdenticalCheckpointBytes) {
  const auto images = noisy_set(2, 32);
  const Stage1Result a = train_stage1(images, kTinyNet, tiny_config(3));
  const Stage1Result b = train_stage1(images, kTinyNet, tiny_config(3));
  EXPECT_EQ(stage1_bytes(a.model), stage1_bytes(b.model));
  TrainConfig threaded = tiny_config(3);
  threaded.threads = 3;
  EXPECT_EQ(stage1_bytes(train_stage1(images, kTinyNet, threaded).model), stage1_bytes(a.model));
  EXPECT_NE(stage1_bytes(train_stage1(images, kTinyNet, tiny_config(4)).model), stage1_bytes(a.model));
}

TEST(Stage1, LogIsFiniteAndCsvHasColumns) {
  const Stage1Result r = train_stage1(noisy_set(1, 32), kTinyNet, tiny_config(5));
  ASSERT_EQ(r.log.epoch_mean_loss.size(), 2u);
  ASSERT_EQ(r.log.rows.size(), 4u);  // 8 patches / batch 4, two epochs
  for (const auto& row : r.log.rows) EXPECT_TRUE(std::isfinite(row.loss));
  std::ostringstream csv;
  r.log.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "epoch,step,loss,lr,wall_ms");
}

TEST(Stage1, CheckpointRoundTrip) {
  const Stage1Result r = train_stage1(noisy_set(2, 32), kTinyNet, tiny_config(6));
  std::stringstream ss;
  write_stage1(ss, r.model);
  const Stage1Model back = read_stage1(ss);
  EXPECT_EQ(back.dbsn.config, r.model.dbsn.config);
  EXPECT_EQ(back.registry.estimators.size(), 2u);
  EXPECT_EQ(stage1_bytes(back), stage1_bytes(r.model));
  std::string truncated = stage1_bytes(r.model);
  truncated.resize(truncated.size() / 2);
  std::istringstream in(truncated);
  EXPECT_THROW(read_stage1(in), IoError);
  std::istringstream junk("not a checkpoint");
  EXPECT_THROW(read_stage1(junk), IoError);
}

TEST(Stage1, NonFiniteLossNamesTheBatch) {
  auto images = noisy_set(1, 32);
  for (double& v : images[0].pixels.data()) v = std::numeric_limits<double>::quiet_NaN();
  try {
    train_stage1(images, kTinyNet, tiny_config(7));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
  }
}

TEST(Stage1, RejectsPatchSmallerThanReceptiveField) {
  TrainConfig cfg = tiny_config(1);
  cfg.patch_size = 16;
  EXPECT_THROW(train_stage1(noisy_set(1, 32), kTinyNet, cfg), ConfigError);
  EXPECT_THROW(train_stage1({}, kTinyNet, tiny_config(1)), ConfigError);
}

TEST(DenoiseStage1, ZeroSigmaMuReturnsMuAndKeepsShape) {
  const Stage1Result r = train_stage1(noisy_set(1, 32), kTinyNet, tiny_config(8));
  const Tensor y = noisy_set(1, 20)[0].pixels;
  Stage1Options opt;
  opt.zero_sigma_mu = true;
  const Stage1Output out = denoise_stage1(r.model, y, "n0", opt);
  EXPECT_EQ(out.denoised.storage(), out.mu.storage());
  EXPECT_EQ(out.denoised.shape(), y.shape());
  EXPECT_EQ(out.sigma_n.height(), 20u);
  EXPECT_FALSE(out.used_fallback);
}

TEST(DenoiseStage1, UnknownImageFallsBackByMeanIntensity) {
  Stage1Model m;
  m.dbsn = make_dbsn(kTinyNet, 1);
  m.registry.estimators.emplace("dark", make_cnn_est(1, 2));
  m.registry.estimators.emplace("bright", make_cnn_est(1, 3));
  m.registry.mean_intensity = {{"dark", 0.2}, {"bright", 0.8}};
  const Stage1Output out = denoise_stage1(m, Tensor({1, 12, 12}, 0.7), "other");
  EXPECT_TRUE(out.used_fallback);
  EXPECT_EQ(out.estimator_id, "bright");
  EXPECT_EQ(denoise_stage1(m, Tensor({1, 12, 12}, 0.7), "dark").estimator_id, "dark");
}

// Desk-scale run on a single flat image, trained once for the suite.
class FlatImageRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const NoiseLevelFunction nlf{AwgnNoise{25.0}};
    TrainConfig cfg = TrainConfig::desk();
    cfg.patches_per_epoch = 32;
    cfg.epochs = 30;
    cfg.lr = {1e-3, 0.1, 10, 1e-5};
    cfg.seed = 12;
    result_ = new Stage1Result(
        train_stage1({{"flat", synthesize(nlf, clean(), 13)}}, DbsnConfig::desk(), cfg));
    held_ = new Tensor(synthesize(nlf, clean(), 14));
    output_ = new Stage1Output(denoise_stage1(result_->model, *held_, "flat"));
  }
  static void TearDownTestSuite() {
    delete output_;
    delete held_;
    delete result_;
  }
  static Tensor clean() { return Tensor({1, 64, 64}, 0.5); }

  static Stage1Result* result_;
  static Tensor* held_;
  static Stage1Output* output_;
};
Stage1Result* FlatImageRun::result_ = nullptr;
Tensor* FlatImageRun::held_ = nullptr;
Stage1Output* FlatImageRun::output_ = nullptr;

TEST_F(FlatImageRun, LossDecreasesAndFusionGains) {
  EXPECT_LT(result_->log.epoch_mean_loss.back(), result_->log.epoch_mean_loss.front());
  const double gain = psnr(clean(), output_->denoised) - psnr(clean(), *held_);
  EXPECT_GE(gain, 3.0);
  EXPECT_EQ(output_->denoised.shape(), held_->shape());
}

TEST_F(FlatImageRun, NoiseLevelRecovered) {
  const double target = (25.0 / 255.0) * (25.0 / 255.0);
  const CovField& sn = output_->sigma_n;
  std::size_t close = 0;
  double mean = 0.0;
  for (std::size_t p = 0; p < sn.pixels(); ++p) {
    close += std::abs(sn.at(p)(0, 0) - target) <= 0.2 * target;
    mean += sn.at(p)(0, 0);
  }
  const double n = static_cast<double>(sn.pixels());
  EXPECT_GE(static_cast<double>(close) / n, 0.8)
      << "mean learned variance " << mean / n << ", target " << target;
}

TEST(Distill, PairCardinalityNoiseAndReproducibleSelection) {
  const auto noisy = noisy_set(3, 32);
  const Stage1Result r = train_stage1(noisy, kTinyNet, tiny_config(9));
  std::vector<CleanImage> clean;
  for (std::size_t i = 0; i < 5; ++i) clean.push_back({"c" + std::to_string(i), synthetic_scene(1, 20, 20, 60 + i)});
  const DistillPairs a = make_distill_pairs(clean, noisy, r.model, 17);
  EXPECT_EQ(a.synthetic.size(), clean.size());
  EXPECT_EQ(a.real.size(), noisy.size());
  EXPECT_EQ(a.estimator_choice.size(), clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(a.synthetic[i].target.storage(), clean[i].pixels.storage());
    EXPECT_GT(mse(a.synthetic[i].input, clean[i].pixels), 0.0);
  }
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    EXPECT_EQ(a.real[i].input.storage(), noisy[i].pixels.storage());
  }
  const DistillPairs b = make_distill_pairs(clean, noisy, r.model, 17, 2);
  EXPECT_EQ(a.estimator_choice, b.estimator_choice);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(a.synthetic[i].input.storage(), b.synthetic[i].input.storage());
  }
  EXPECT_THROW(make_distill_pairs({}, noisy, r.model, 1), ConfigError);
}

TEST(Student, ForwardKeepsShapeAndCheckpointRoundTrips) {
  const StudentParams s = make_student(StudentConfig{3, 3, 8}, 4);
  const Tensor y = synthetic_scene(3, 10, 12, 5);
  EXPECT_EQ(student_forward(s, y).shape(), y.shape());
  std::stringstream ss;
  write_student(ss, s);
  const StudentParams back = read_student(ss);
  EXPECT_EQ(back.config, s.config);
  // Checkpoints store float32.
  const Tensor a = student_forward(back, y), b = student_forward(s, y);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Student, PureSyntheticTrainingReducesLoss) {
  std::vector<ImagePair> p1;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor x = synthetic_scene(1, 24, 24, 70 + i);
    p1.push_back({"p" + std::to_string(i), synthesize(NoiseLevelFunction{AwgnNoise{25.0}}, x, 80 + i), x});
  }
  TrainConfig cfg = tiny_config(10);
  cfg.epochs = 6;
  cfg.lr = {1e-3, 0.1, 10, 1e-5};
  const StudentResult r = train_student(p1, {}, StudentConfig{1, 3, 8}, cfg);
  EXPECT_LT(r.log.epoch_mean_loss.back(), r.log.epoch_mean_loss.front());
  EXPECT_THROW(train_student({}, p1, StudentConfig{1, 3, 8}, cfg), ConfigError);
}

TEST(RealModel, CheckpointRoundTrip) {
  const auto images = noisy_set(1, 96);
  TrainConfig cfg = tiny_config(11);
  cfg.epochs = 1;
  const RealModel m = train_real(images, kTinyNet, cfg, false);
  ASSERT_EQ(m.groups.size(), 4u);
  std::stringstream ss;
  write_real_model(ss, m);
  const RealModel back = read_real_model(ss);
  ASSERT_EQ(back.groups.size(), 4u);
  const Tensor y = images[0].pixels;
  const Tensor a = real_denoise(back, y, "n0"), b = real_denoise(m, y, "n0");
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4);
  std::ostringstream again;
  write_real_model(again, back);
  EXPECT_EQ(again.str(), ss.str());
}

}  // namespace
}  // namespace blindspot
