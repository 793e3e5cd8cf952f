#include "wake/latent/edm.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using wake::SplitMix64;
using wake::mix_seed;
using wake::latent::DenoiserParams;
using wake::latent::EdmConfig;
using wake::latent::kContextDim;
using wake::latent::kLatentDim;
using wake::latent::LatentState;
using wake::latent::Mat;
using wake::latent::Precond;
using wake::latent::ToyData;
using wake::latent::ToyDataset;
using wake::latent::ToyDatasetSpec;
using wake::latent::TrainConfig;
using wake::latent::TrainResult;
using wake::latent::Vec;

TEST(Precondition, HalfSkipAtSigmaEqualsSigmaData) {
  const Precond c = wake::latent::edm_precondition(0.5, 0.5);
  EXPECT_DOUBLE_EQ(c.c_skip, 0.5);
  EXPECT_NEAR(c.c_out, 0.5 * 0.5 / std::sqrt(0.5), 1e-15);
}

TEST(Precondition, SmallSigmaLimit) {
  const Precond c = wake::latent::edm_precondition(1e-9, 0.5);
  EXPECT_NEAR(c.c_skip, 1.0, 1e-12);
  EXPECT_NEAR(c.c_out, 0.0, 1e-8);
}

TEST(Precondition, InvariantsAcrossSigmaRange) {
  for (double s = 1e-4; s < 100.0; s *= 3.0) {
    const Precond c = wake::latent::edm_precondition(s, 0.5);
    EXPECT_GT(c.c_skip, 0.0);
    EXPECT_LE(c.c_skip, 1.0);
    EXPECT_GE(c.c_out, 0.0);
    EXPECT_GT(c.c_in, 0.0);
    EXPECT_DOUBLE_EQ(c.c_noise, 0.25 * std::log(s));
  }
}

TEST(Precondition, RejectsNonPositiveSigma) {
  EXPECT_THROW(wake::latent::edm_precondition(-1.0, 0.5), std::domain_error);
  EXPECT_THROW(wake::latent::edm_precondition(0.0, 0.5), std::domain_error);
  EXPECT_THROW(wake::latent::edm_precondition(1.0, 0.0), std::domain_error);
}

TEST(Lambda, MatchesFormula) {
  EXPECT_NEAR(wake::latent::edm_lambda(0.5, 0.5), 2.0 / 0.25, 1e-12);
  const double s = 1.7, sd = 0.4;
  EXPECT_NEAR(wake::latent::edm_lambda(s, sd),
              (s * s + sd * sd) / ((s * sd) * (s * sd)), 1e-12);
}

TEST(ForwardNoising, ZeroSigmaIsIdentity) {
  SplitMix64 rng(1);
  const Mat z0 = wake::latent::randn(5, 2, rng);
  const Mat noise = wake::latent::randn(5, 2, rng);
  const Mat out = wake::latent::forward_noising(z0, Vec::Zero(5), noise);
  EXPECT_EQ(out, z0);
}

TEST(ForwardNoising, AddsScaledNoisePerRow) {
  SplitMix64 rng(2);
  const Mat z0 = wake::latent::randn(3, 2, rng);
  const Mat noise = wake::latent::randn(3, 2, rng);
  Vec sig(3);
  sig << 0.1, 1.0, 4.0;
  const Mat out = wake::latent::forward_noising(z0, sig, noise);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      EXPECT_DOUBLE_EQ(out(i, j), z0(i, j) + sig[i] * noise(i, j));
}

TEST(ForwardNoising, RejectsShapeMismatch) {
  SplitMix64 rng(3);
  const Mat z0 = wake::latent::randn(3, 2, rng);
  const Mat noise = wake::latent::randn(4, 2, rng);
  EXPECT_THROW(wake::latent::forward_noising(z0, Vec::Zero(3), noise),
               std::invalid_argument);
  EXPECT_THROW(
      wake::latent::forward_noising(z0, Vec::Zero(2), Mat::Zero(3, 2)),
      std::invalid_argument);
}

namespace {

DenoiserParams zeroed_params() {
  DenoiserParams p = DenoiserParams::init(1);
  for (Mat* t : p.params()) t->setZero();
  return p;
}

}  // namespace

TEST(EdmLoss, PerfectDenoiserStubGivesZero) {
  // All-zero weights make the network output exactly b3, so choosing
  // b3 = (1 - c_skip)/c_out * z0 with zero noise makes D reproduce z0.
  const double sigma = 0.8;
  EdmConfig cfg;
  const Precond c = wake::latent::edm_precondition(sigma, cfg.sigma_data);
  LatentState z0(2);
  z0 << 0.4, -1.1;
  DenoiserParams p = zeroed_params();
  p.b3.col(0) = ((1.0 - c.c_skip) / c.c_out) * z0;

  const double lam = wake::latent::edm_lambda(sigma, cfg.sigma_data);
  const double loss = wake::latent::edm_loss(
      p, z0, Vec::Zero(2), Vec::Zero(2), 5.0, sigma, Vec::Zero(2), lam, cfg);
  EXPECT_LT(loss, 1e-24);
}

TEST(EdmLoss, MatchesManualFormula) {
  SplitMix64 rng(8);
  const DenoiserParams p = DenoiserParams::init(17);
  EdmConfig cfg;
  LatentState z0 = wake::latent::randn(1, 2, rng).row(0).transpose();
  LatentState c1 = wake::latent::randn(1, 2, rng).row(0).transpose();
  LatentState c2 = wake::latent::randn(1, 2, rng).row(0).transpose();
  Vec noise = wake::latent::randn(1, 2, rng).row(0).transpose();
  const double sigma = 1.3;
  const double lam = wake::latent::edm_lambda(sigma, cfg.sigma_data);

  Mat zn(1, 2);
  zn.row(0) = (z0 + sigma * noise).transpose();
  Mat ctx(1, 4);
  ctx << c1.transpose(), c2.transpose();
  Vec sv(1);
  sv[0] = sigma;
  const Mat D = wake::latent::denoise(p, zn, sv, 5.0, ctx, cfg.sigma_data);
  const double want = lam * (D.row(0).transpose() - z0).squaredNorm();

  const double got =
      wake::latent::edm_loss(p, z0, c1, c2, 5.0, sigma, noise, lam, cfg);
  EXPECT_DOUBLE_EQ(got, want);
}

TEST(EdmLoss, RejectsBadSigmaAndShapes) {
  const DenoiserParams p = DenoiserParams::init(1);
  EdmConfig cfg;
  const Vec z = Vec::Zero(2);
  EXPECT_THROW(
      wake::latent::edm_loss(p, z, z, z, 5.0, 0.0, z, 1.0, cfg),
      std::domain_error);
  EXPECT_THROW(
      wake::latent::edm_loss(p, z, z, z, 5.0, -1.0, z, 1.0, cfg),
      std::domain_error);
  EXPECT_THROW(
      wake::latent::edm_loss(p, Vec::Zero(3), z, z, 5.0, 1.0, z, 1.0, cfg),
      std::invalid_argument);
  EXPECT_THROW(
      wake::latent::edm_loss(p, z, z, z, 5.0, 1.0, Vec::Zero(1), 1.0, cfg),
      std::invalid_argument);
}

namespace {

double fd_rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) /
         std::max({std::abs(analytic), std::abs(fd), 1e-4});
}

}  // namespace

TEST(EdmLoss, GradientsMatchCentralDifferences) {
  SplitMix64 rng(14);
  DenoiserParams p = DenoiserParams::init(23);
  EdmConfig cfg;
  const LatentState z0 = wake::latent::randn(1, 2, rng).row(0).transpose();
  const LatentState c1 = wake::latent::randn(1, 2, rng).row(0).transpose();
  const LatentState c2 = wake::latent::randn(1, 2, rng).row(0).transpose();
  const Vec noise = wake::latent::randn(1, 2, rng).row(0).transpose();
  const double sigma = 0.8, S = 5.0;
  const double lam = wake::latent::edm_lambda(sigma, cfg.sigma_data);

  std::vector<Mat> grads;
  wake::latent::edm_loss(p, z0, c1, c2, S, sigma, noise, lam, cfg, &grads);

  const double eps = 1e-5;
  double worst = 0.0;
  auto tensors = p.params();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Mat& tensor = *tensors[k];
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        const double saved = tensor(r, c);
        tensor(r, c) = saved + eps;
        const double lp = wake::latent::edm_loss(p, z0, c1, c2, S, sigma,
                                                 noise, lam, cfg);
        tensor(r, c) = saved - eps;
        const double lm = wake::latent::edm_loss(p, z0, c1, c2, S, sigma,
                                                 noise, lam, cfg);
        tensor(r, c) = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        worst = std::max(worst, fd_rel_err(grads[k](r, c), fd));
      }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(NoiseSchedule, EndpointsAndMonotonicity) {
  EdmConfig cfg;
  cfg.n_steps = 32;
  const auto sig = wake::latent::noise_schedule(cfg);
  ASSERT_EQ(sig.size(), 32u);
  EXPECT_NEAR(sig.front(), cfg.sigma_max, 1e-12 * cfg.sigma_max);
  EXPECT_NEAR(sig.back(), cfg.sigma_min, 1e-12);
  for (std::size_t i = 1; i < sig.size(); ++i) EXPECT_LT(sig[i], sig[i - 1]);
}

TEST(NoiseSchedule, SingleStepIsSigmaMax) {
  EdmConfig cfg;
  cfg.n_steps = 1;
  const auto sig = wake::latent::noise_schedule(cfg);
  ASSERT_EQ(sig.size(), 1u);
  EXPECT_DOUBLE_EQ(sig[0], cfg.sigma_max);
}

TEST(NoiseSchedule, RejectsNonPositiveStepCount) {
  EdmConfig cfg;
  cfg.n_steps = 0;
  EXPECT_THROW(wake::latent::noise_schedule(cfg), std::invalid_argument);
}

TEST(HeunSampler, ConstantDenoiserConvergesToFixedPoint) {
  // For D == z*, the probability-flow ODE contracts linearly in sigma:
  // z(sigma) = z* + (z_init - z*) sigma / sigma_max, and the closing Euler
  // step to sigma = 0 lands on z* itself.
  EdmConfig cfg;
  cfg.n_steps = 64;
  Eigen::RowVector2d zstar(0.7, -0.3);
  const auto stub = [&](const Mat& z, const Vec&) {
    Mat D(z.rows(), 2);
    D.rowwise() = zstar;
    return D;
  };
  const Mat out = wake::latent::heun_integrate(stub, 6, cfg, 2024);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(out(i, 0), zstar[0], 1e-3);
    EXPECT_NEAR(out(i, 1), zstar[1], 1e-3);
  }
}

TEST(HeunSampler, BitDeterministicGivenSeed) {
  const DenoiserParams p = DenoiserParams::init(3);
  EdmConfig cfg;
  cfg.n_steps = 16;
  const LatentState c1 = Vec::Constant(2, 0.2);
  const LatentState c2 = Vec::Constant(2, -0.1);
  const LatentState a = wake::latent::heun_sample(p, 5.0, c1, c2, cfg, 42);
  const LatentState b = wake::latent::heun_sample(p, 5.0, c1, c2, cfg, 42);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
  const LatentState c = wake::latent::heun_sample(p, 5.0, c1, c2, cfg, 43);
  EXPECT_NE(a[0], c[0]);
}

TEST(HeunSampler, RejectsZeroStepsAndBadContext) {
  const DenoiserParams p = DenoiserParams::init(3);
  EdmConfig cfg;
  cfg.n_steps = 0;
  EXPECT_THROW(wake::latent::heun_sample(p, 5.0, Vec::Zero(2), Vec::Zero(2),
                                         cfg, 1),
               std::invalid_argument);
  cfg.n_steps = 8;
  EXPECT_THROW(wake::latent::heun_sample(p, 5.0, Vec::Zero(3), Vec::Zero(2),
                                         cfg, 1),
               std::invalid_argument);
  EXPECT_THROW(
      wake::latent::heun_sample_batch(p, 5.0, Mat::Zero(2, 3), cfg, 1),
      std::invalid_argument);
}

TEST(Rollout, SingleStepAppendsOneState) {
  const DenoiserParams p = DenoiserParams::init(4);
  EdmConfig cfg;
  cfg.n_steps = 8;
  const std::vector<LatentState> init = {Vec::Constant(2, 0.1),
                                         Vec::Constant(2, 0.2)};
  const auto traj = wake::latent::rollout(p, init, 5.0, 1, cfg, 7);
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(traj[0].size(), 2);
}

TEST(Rollout, ConditioningTracksTrailingStates) {
  const DenoiserParams p = DenoiserParams::init(4);
  EdmConfig cfg;
  cfg.n_steps = 8;
  const std::vector<LatentState> init = {Vec::Constant(2, 0.1),
                                         Vec::Constant(2, 0.2)};
  std::vector<std::pair<LatentState, LatentState>> seen;
  const auto traj = wake::latent::rollout(
      p, init, 5.0, 5, cfg, 7,
      [&](int, const LatentState& a, const LatentState& b) {
        seen.emplace_back(a, b);
      });
  ASSERT_EQ(seen.size(), 5u);
  EXPECT_EQ(seen[0].first, init[0]);
  EXPECT_EQ(seen[0].second, init[1]);
  EXPECT_EQ(seen[1].first, traj[0]);
  EXPECT_EQ(seen[1].second, init[0]);
  for (std::size_t t = 2; t < 5; ++t) {
    EXPECT_EQ(seen[t].first, traj[t - 1]);
    EXPECT_EQ(seen[t].second, traj[t - 2]);
  }
}

TEST(Rollout, DeterministicAndValidating) {
  const DenoiserParams p = DenoiserParams::init(4);
  EdmConfig cfg;
  cfg.n_steps = 8;
  const std::vector<LatentState> init = {Vec::Constant(2, 0.1),
                                         Vec::Constant(2, 0.2)};
  const auto a = wake::latent::rollout(p, init, 5.0, 4, cfg, 99);
  const auto b = wake::latent::rollout(p, init, 5.0, 4, cfg, 99);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t], b[t]);

  EXPECT_THROW(wake::latent::rollout(p, {Vec::Zero(2)}, 5.0, 3, cfg, 1),
               std::invalid_argument);
  EXPECT_THROW(wake::latent::rollout(p, init, 5.0, 0, cfg, 1),
               std::invalid_argument);
}

TEST(TrainToy, LossDecreasesOnMixtureAndRunIsDeterministic) {
  ToyDatasetSpec spec;
  spec.kind = ToyDataset::mixture;
  spec.n = 512;
  spec.data_seed = 123;
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch = 128;
  const TrainResult a = wake::latent::train_toy(spec, DenoiserParams::init(9),
                                                tc, 321);
  ASSERT_EQ(a.epoch_losses.size(), 30u);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());

  const TrainResult b = wake::latent::train_toy(spec, DenoiserParams::init(9),
                                                tc, 321);
  for (std::size_t i = 0; i < a.epoch_losses.size(); ++i)
    EXPECT_EQ(a.epoch_losses[i], b.epoch_losses[i]);
}

TEST(TrainToy, RejectsEmptyDataset) {
  ToyDatasetSpec spec;
  spec.n = 0;
  EXPECT_THROW(wake::latent::train_toy(spec, DenoiserParams::init(1),
                                       TrainConfig{}, 1),
               std::invalid_argument);
  spec.kind = ToyDataset::ar_rotation;
  spec.n = 2;
  EXPECT_THROW(wake::latent::train_toy(spec, DenoiserParams::init(1),
                                       TrainConfig{}, 1),
               std::invalid_argument);
}

TEST(TrainToy, MixtureSamplingRecoversMoments) {
  ToyDatasetSpec spec;
  spec.kind = ToyDataset::mixture;
  spec.n = 4096;
  spec.data_seed = 123;
  TrainConfig tc;  // 200 epochs, batch 256
  const TrainResult res = wake::latent::train_toy(
      spec, DenoiserParams::init(31), tc, 321);

  EdmConfig cfg;
  cfg.sigma_data = res.sigma_data;
  cfg.n_steps = 32;
  const Mat draws = wake::latent::heun_sample_batch(
      res.params, spec.s, Mat::Zero(10000, kContextDim), cfg, 777);

  const Eigen::RowVector2d mean = draws.colwise().mean();
  EXPECT_LT(std::abs(mean[0]), 0.1);
  EXPECT_LT(std::abs(mean[1]), 0.1);

  const double var0 =
      (draws.col(0).array() - mean[0]).square().mean();
  const double var1 =
      (draws.col(1).array() - mean[1]).square().mean();
  const double want0 =
      spec.mix_sigma * spec.mix_sigma + spec.mix_mean * spec.mix_mean;
  const double want1 = spec.mix_sigma * spec.mix_sigma;
  EXPECT_NEAR(var0, want0, 0.20 * want0);
  EXPECT_NEAR(var1, want1, 0.20 * want1);
}

TEST(TrainToy, ArRotationBeatsUntrainedBaseline) {
  ToyDatasetSpec spec;
  spec.kind = ToyDataset::ar_rotation;
  spec.n = 4200;
  spec.s = 5.0;
  spec.data_seed = 123;
  const ToyData data = wake::latent::make_toy_data(spec);

  TrainConfig tc;  // 200 epochs, batch 256
  const DenoiserParams untrained = DenoiserParams::init(5);
  const TrainResult trained = wake::latent::train_toy(
      spec, DenoiserParams::init(5), tc, 77);

  EdmConfig cfg;
  cfg.sigma_data = data.sigma_data;
  cfg.n_steps = 32;

  const int T = spec.n;
  const int n_eval = 400;
  SplitMix64 erng(99);
  const double ang = 2.0 * std::numbers::pi / spec.s;
  const double cr = std::cos(ang), sr = std::sin(ang);

  Mat ctx(n_eval, kContextDim);
  Mat true_mean(n_eval, kLatentDim);
  for (int i = 0; i < n_eval; ++i) {
    const int t =
        2 + static_cast<int>(erng.next_u64() % static_cast<std::uint64_t>(T - 3));
    ctx.row(i) << data.traj.row(t - 1), data.traj.row(t - 2);
    const double x = data.traj(t - 1, 0), y = data.traj(t - 1, 1);
    true_mean(i, 0) = spec.ar_decay * (cr * x - sr * y);
    true_mean(i, 1) = spec.ar_decay * (sr * x + cr * y);
  }

  const int n_avg = 8;
  auto one_step_err = [&](const DenoiserParams& p) {
    Mat acc = Mat::Zero(n_eval, kLatentDim);
    for (int a = 0; a < n_avg; ++a)
      acc += wake::latent::heun_sample_batch(
          p, spec.s, ctx, cfg, mix_seed(4242, static_cast<std::uint64_t>(a)));
    acc /= n_avg;
    return (acc - true_mean).rowwise().norm().mean();
  };

  const double err_tr = one_step_err(trained.params);
  const double err_un = one_step_err(untrained);
  EXPECT_GE(err_un / err_tr, 3.0)
      << "trained " << err_tr << " untrained " << err_un;
}
