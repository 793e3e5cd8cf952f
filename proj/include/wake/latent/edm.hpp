#pragma once

#include "wake/latent/nn.hpp"
#include "wake/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace wake::latent {

constexpr int kLatentDim = 2;
constexpr int kContextStates = 2;
constexpr int kHidden = 16;
constexpr int kCondHidden = 8;
constexpr int kInputDim = kLatentDim * (kContextStates + 1);
constexpr int kContextDim = kLatentDim * kContextStates;

/// Latent state z, length 2.
using LatentState = Vec;

struct EdmConfig {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double sigma_data = 0.5;
  double rho = 7.0;
  int n_steps = 32;

  void validate() const {
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
      throw std::invalid_argument("EdmConfig: need 0 < sigma_min < sigma_max");
    if (!(sigma_data > 0.0))
      throw std::invalid_argument("EdmConfig: sigma_data must be positive");
    if (!(rho > 0.0)) throw std::invalid_argument("EdmConfig: rho must be positive");
  }
};

struct Precond {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
};

inline Precond edm_precondition(double sigma, double sigma_data) {
  if (!(sigma > 0.0))
    throw std::domain_error("edm_precondition: sigma must be positive");
  if (!(sigma_data > 0.0))
    throw std::domain_error("edm_precondition: sigma_data must be positive");
  const double s2 = sigma * sigma + sigma_data * sigma_data;
  Precond c;
  c.c_skip = sigma_data * sigma_data / s2;
  c.c_out = sigma * sigma_data / std::sqrt(s2);
  c.c_in = 1.0 / std::sqrt(s2);
  c.c_noise = 0.25 * std::log(sigma);
  return c;
}

/// Loss weight pairing with the preconditioner: lambda = (s^2 + sd^2)/(s sd)^2.
inline double edm_lambda(double sigma, double sigma_data) {
  if (!(sigma > 0.0) || !(sigma_data > 0.0))
    throw std::domain_error("edm_lambda: sigma and sigma_data must be positive");
  const double p = sigma * sigma_data;
  return (sigma * sigma + sigma_data * sigma_data) / (p * p);
}

/// z_sigma = z0 + sigma * noise. At sigma = 0 this is the identity.
inline Mat forward_noising(const Mat& z0, const Vec& sigma, const Mat& noise) {
  if (z0.rows() != noise.rows() || z0.cols() != noise.cols() ||
      sigma.size() != z0.rows())
    throw std::invalid_argument("forward_noising: shape mismatch");
  return z0 + sigma.asDiagonal() * noise;
}

/// Dense denoiser with a conditioning head: the (c_noise, S/10) embedding is
/// mapped to per-layer scale and shift applied as h * (1 + g) + s.
struct DenoiserParams {
  Mat W1, b1;  // kHidden x kInputDim
  Mat W2, b2;  // kHidden x kHidden
  Mat W3, b3;  // kLatentDim x kHidden
  Mat Wc, bc;  // kCondHidden x 2
  Mat Wm, bm;  // 4 kHidden x kCondHidden

  static DenoiserParams init(std::uint64_t seed) {
    SplitMix64 rng(seed);
    DenoiserParams p;
    p.W1 = glorot(kHidden, kInputDim, rng);
    p.b1 = Mat::Zero(kHidden, 1);
    p.W2 = glorot(kHidden, kHidden, rng);
    p.b2 = Mat::Zero(kHidden, 1);
    p.W3 = glorot(kLatentDim, kHidden, rng, 0.1);
    p.b3 = Mat::Zero(kLatentDim, 1);
    p.Wc = glorot(kCondHidden, 2, rng);
    p.bc = Mat::Zero(kCondHidden, 1);
    p.Wm = glorot(4 * kHidden, kCondHidden, rng, 0.1);
    p.bm = Mat::Zero(4 * kHidden, 1);
    return p;
  }

  std::vector<Mat*> params() {
    return {&W1, &b1, &W2, &b2, &W3, &b3, &Wc, &bc, &Wm, &bm};
  }
  std::vector<const Mat*> params() const {
    return {&W1, &b1, &W2, &b2, &W3, &b3, &Wc, &bc, &Wm, &bm};
  }
};

struct DenoiserCache {
  Mat x, e, hc, mod, h1, h1m, h2, h2m, out;
  Vec cs, co, ci;
};

/// D_xi(zn; sigma, S, ctx). Rows are batch entries; ctx rows hold the two
/// conditioning states (z_prev, z_prev2) concatenated.
inline Mat denoise(const DenoiserParams& p, const Mat& zn, const Vec& sigma,
                   double S, const Mat& ctx, double sigma_data,
                   DenoiserCache* cache = nullptr) {
  const auto B = zn.rows();
  if (zn.cols() != kLatentDim)
    throw std::invalid_argument("denoise: latent width must be 2");
  if (ctx.rows() != B || ctx.cols() != kContextDim)
    throw std::invalid_argument("denoise: context shape mismatch");
  if (sigma.size() != B)
    throw std::invalid_argument("denoise: sigma length mismatch");

  Vec cs(B), co(B), ci(B), cn(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Precond c = edm_precondition(sigma[i], sigma_data);
    cs[i] = c.c_skip;
    co[i] = c.c_out;
    ci[i] = c.c_in;
    cn[i] = c.c_noise;
  }

  Mat x(B, kInputDim);
  x << ci.asDiagonal() * zn, ctx;
  Mat e(B, 2);
  e.col(0) = cn;
  e.col(1).setConstant(S / 10.0);

  Mat hc = ((e * p.Wc.transpose()).rowwise() +
            p.bc.col(0).transpose()).array().tanh().matrix();
  Mat mod = (hc * p.Wm.transpose()).rowwise() + p.bm.col(0).transpose();
  auto g1 = mod.middleCols(0, kHidden);
  auto s1 = mod.middleCols(kHidden, kHidden);
  auto g2 = mod.middleCols(2 * kHidden, kHidden);
  auto s2 = mod.middleCols(3 * kHidden, kHidden);

  Mat h1 = ((x * p.W1.transpose()).rowwise() +
            p.b1.col(0).transpose()).array().tanh().matrix();
  Mat h1m = h1.cwiseProduct((g1.array() + 1.0).matrix()) + s1;
  Mat h2 = ((h1m * p.W2.transpose()).rowwise() +
            p.b2.col(0).transpose()).array().tanh().matrix();
  Mat h2m = h2.cwiseProduct((g2.array() + 1.0).matrix()) + s2;
  Mat out = (h2m * p.W3.transpose()).rowwise() + p.b3.col(0).transpose();
  Mat D = cs.asDiagonal() * zn + co.asDiagonal() * out;

  if (cache) {
    cache->x = std::move(x);
    cache->e = std::move(e);
    cache->hc = std::move(hc);
    cache->mod = std::move(mod);
    cache->h1 = std::move(h1);
    cache->h1m = std::move(h1m);
    cache->h2 = std::move(h2);
    cache->h2m = std::move(h2m);
    cache->out = std::move(out);
    cache->cs = std::move(cs);
    cache->co = std::move(co);
    cache->ci = std::move(ci);
  }
  return D;
}

/// Reverse-mode gradients of sum(dD .* D) with respect to every parameter,
/// in the order of DenoiserParams::params().
inline std::vector<Mat> denoise_backward(const DenoiserParams& p,
                                         const Mat& dD,
                                         const DenoiserCache& c) {
  auto g1 = c.mod.middleCols(0, kHidden);
  auto g2 = c.mod.middleCols(2 * kHidden, kHidden);

  Mat dout = c.co.asDiagonal() * dD;
  Mat gW3 = dout.transpose() * c.h2m;
  Mat gb3 = dout.colwise().sum().transpose();
  Mat dh2m = dout * p.W3;
  Mat dh2 = dh2m.cwiseProduct((g2.array() + 1.0).matrix());
  Mat dg2 = dh2m.cwiseProduct(c.h2);
  const Mat& ds2 = dh2m;
  Mat da2 = dh2.cwiseProduct((1.0 - c.h2.array().square()).matrix());
  Mat gW2 = da2.transpose() * c.h1m;
  Mat gb2 = da2.colwise().sum().transpose();
  Mat dh1m = da2 * p.W2;
  Mat dh1 = dh1m.cwiseProduct((g1.array() + 1.0).matrix());
  Mat dg1 = dh1m.cwiseProduct(c.h1);
  const Mat& ds1 = dh1m;
  Mat da1 = dh1.cwiseProduct((1.0 - c.h1.array().square()).matrix());
  Mat gW1 = da1.transpose() * c.x;
  Mat gb1 = da1.colwise().sum().transpose();
  Mat dmod(dD.rows(), 4 * kHidden);
  dmod << dg1, ds1, dg2, ds2;
  Mat gWm = dmod.transpose() * c.hc;
  Mat gbm = dmod.colwise().sum().transpose();
  Mat dhc = dmod * p.Wm;
  Mat de = dhc.cwiseProduct((1.0 - c.hc.array().square()).matrix());
  Mat gWc = de.transpose() * c.e;
  Mat gbc = de.colwise().sum().transpose();
  return {gW1, gb1, gW2, gb2, gW3, gb3, gWc, gbc, gWm, gbm};
}

/// Single-sample denoising loss lambda * ||D(z0 + sigma*noise) - z0||^2.
/// With `grads` non-null, accumulates d loss / d param.
inline double edm_loss(const DenoiserParams& p, const LatentState& z0,
                       const LatentState& z_prev, const LatentState& z_prev2,
                       double S, double sigma, const Vec& noise,
                       double lambda_weight, const EdmConfig& cfg,
                       std::vector<Mat>* grads = nullptr) {
  if (!(sigma > 0.0)) throw std::domain_error("edm_loss: sigma must be positive");
  if (z0.size() != kLatentDim || noise.size() != kLatentDim ||
      z_prev.size() != kLatentDim || z_prev2.size() != kLatentDim)
    throw std::invalid_argument("edm_loss: latent states must have length 2");

  Mat zn(1, kLatentDim);
  zn.row(0) = (z0 + sigma * noise).transpose();
  Mat ctx(1, kContextDim);
  ctx << z_prev.transpose(), z_prev2.transpose();
  Vec sig(1);
  sig[0] = sigma;

  DenoiserCache cache;
  Mat D = denoise(p, zn, sig, S, ctx, cfg.sigma_data, grads ? &cache : nullptr);
  Vec diff = D.row(0).transpose() - z0;
  const double loss = lambda_weight * diff.squaredNorm();
  if (grads) {
    Mat dD(1, kLatentDim);
    dD.row(0) = 2.0 * lambda_weight * diff.transpose();
    *grads = denoise_backward(p, dD, cache);
    // The skip connection multiplies zn, but zn is an input here, not a
    // parameter, so no extra parameter gradient arises from it.
  }
  return loss;
}

/// rho-spaced descending schedule from sigma_max to sigma_min.
inline std::vector<double> noise_schedule(const EdmConfig& cfg) {
  cfg.validate();
  if (cfg.n_steps < 1)
    throw std::invalid_argument("noise_schedule: need at least one step");
  std::vector<double> sig(static_cast<std::size_t>(cfg.n_steps));
  if (cfg.n_steps == 1) {
    sig[0] = cfg.sigma_max;
    return sig;
  }
  const double inv_rho = 1.0 / cfg.rho;
  const double a = std::pow(cfg.sigma_max, inv_rho);
  const double b = std::pow(cfg.sigma_min, inv_rho);
  for (int i = 0; i < cfg.n_steps; ++i) {
    const double t = static_cast<double>(i) / (cfg.n_steps - 1);
    sig[static_cast<std::size_t>(i)] = std::pow(a + t * (b - a), cfg.rho);
  }
  return sig;
}

/// Any map (z batch, per-row sigma) -> denoised batch.
using DenoiserFn = std::function<Mat(const Mat&, const Vec&)>;

/// Heun integration of dz/dsigma = (z - D)/sigma down the schedule, with a
/// final Euler step from sigma_min to 0 so a perfect denoiser is recovered
/// exactly. Initial z ~ N(0, sigma_max^2 I) drawn row-major from the seed.
inline Mat heun_integrate(const DenoiserFn& denoiser, Eigen::Index B,
                          const EdmConfig& cfg, std::uint64_t seed) {
  if (cfg.n_steps < 1)
    throw std::invalid_argument("heun_sample: need at least one step");
  const std::vector<double> sig = noise_schedule(cfg);

  SplitMix64 rng(seed);
  Mat z = randn(static_cast<int>(B), kLatentDim, rng) * cfg.sigma_max;
  Vec scur(B), snext(B);
  for (std::size_t j = 0; j < sig.size(); ++j) {
    const double s_cur = sig[j];
    const double s_next = j + 1 < sig.size() ? sig[j + 1] : 0.0;
    scur.setConstant(s_cur);
    Mat D = denoiser(z, scur);
    Mat d = (z - D) / s_cur;
    Mat ze = z + (s_next - s_cur) * d;
    if (s_next > 0.0) {
      snext.setConstant(s_next);
      Mat D2 = denoiser(ze, snext);
      Mat d2 = (ze - D2) / s_next;
      z += (s_next - s_cur) * 0.5 * (d + d2);
    } else {
      z = std::move(ze);
    }
  }
  return z;
}

inline Mat heun_sample_batch(const DenoiserParams& p, double S, const Mat& ctx,
                             const EdmConfig& cfg, std::uint64_t seed) {
  if (ctx.cols() != kContextDim)
    throw std::invalid_argument("heun_sample: context width must be 4");
  const auto denoiser = [&](const Mat& z, const Vec& s) {
    return denoise(p, z, s, S, ctx, cfg.sigma_data);
  };
  return heun_integrate(denoiser, ctx.rows(), cfg, seed);
}

inline LatentState heun_sample(const DenoiserParams& p, double S,
                               const LatentState& z_prev,
                               const LatentState& z_prev2,
                               const EdmConfig& cfg, std::uint64_t seed) {
  if (z_prev.size() != kLatentDim || z_prev2.size() != kLatentDim)
    throw std::invalid_argument("heun_sample: context states must have length 2");
  Mat ctx(1, kContextDim);
  ctx << z_prev.transpose(), z_prev2.transpose();
  Mat z = heun_sample_batch(p, S, ctx, cfg, seed);
  return z.row(0).transpose();
}

/// Autoregressive rollout: T successive samples, each conditioned on the
/// trailing two states. Step t uses seed mix_seed(seed, t). The optional
/// observer sees the conditioning pair actually used at every step.
inline std::vector<LatentState> rollout(
    const DenoiserParams& p, const std::vector<LatentState>& init_context,
    double S, int T, const EdmConfig& cfg, std::uint64_t seed,
    const std::function<void(int, const LatentState&, const LatentState&)>&
        observer = {}) {
  if (init_context.size() != kContextStates)
    throw std::invalid_argument("rollout: context must hold exactly 2 states");
  for (const auto& c : init_context)
    if (c.size() != kLatentDim)
      throw std::invalid_argument("rollout: context states must have length 2");
  if (T < 1) throw std::invalid_argument("rollout: need T >= 1");

  LatentState prev = init_context[0];
  LatentState prev2 = init_context[1];
  std::vector<LatentState> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    if (observer) observer(t, prev, prev2);
    LatentState z = heun_sample(p, S, prev, prev2, cfg,
                                mix_seed(seed, static_cast<std::uint64_t>(t)));
    prev2 = prev;
    prev = z;
    out.push_back(std::move(z));
  }
  return out;
}

/// Posterior-mean proxy: average of n_avg independent one-step samples.
inline LatentState predict_next(const DenoiserParams& p, double S,
                                const LatentState& z_prev,
                                const LatentState& z_prev2,
                                const EdmConfig& cfg, std::uint64_t seed,
                                int n_avg = 8) {
  if (n_avg < 1) throw std::invalid_argument("predict_next: n_avg must be >= 1");
  LatentState acc = Vec::Zero(kLatentDim);
  for (int a = 0; a < n_avg; ++a)
    acc += heun_sample(p, S, z_prev, z_prev2, cfg,
                       mix_seed(seed, static_cast<std::uint64_t>(a)));
  return acc / static_cast<double>(n_avg);
}

enum class ToyDataset { mixture, ar_rotation };

struct ToyDatasetSpec {
  ToyDataset kind = ToyDataset::mixture;
  int n = 4096;  // sample count (mixture) or trajectory length (ar_rotation)
  double s = 5.0;
  double mix_mean = 0.75;
  double mix_sigma = 0.5;
  double ar_decay = 0.9;
  double ar_noise = 0.1;
  std::uint64_t data_seed = 123;
};

struct ToyData {
  Mat z0;   // N x 2 training targets
  Mat ctx;  // N x 4 conditioning
  double sigma_data = 0.5;
  Mat traj;  // full trajectory for ar_rotation, empty for mixture
};

/// Symmetric two-component Gaussian mixture at +-(mix_mean, 0), or a damped
/// rotation AR(1) chain z_t = decay * R(2 pi / S) z_{t-1} + noise * eta.
inline ToyData make_toy_data(const ToyDatasetSpec& spec) {
  ToyData d;
  SplitMix64 rng(spec.data_seed);
  if (spec.kind == ToyDataset::mixture) {
    if (spec.n < 1) throw std::invalid_argument("make_toy_data: empty dataset");
    const int N = spec.n;
    std::vector<int> comp(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
      comp[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_u64() % 2);
    Mat eta = randn(N, kLatentDim, rng);
    d.z0.resize(N, kLatentDim);
    for (int i = 0; i < N; ++i) {
      const double sign = comp[static_cast<std::size_t>(i)] == 0 ? 1.0 : -1.0;
      d.z0(i, 0) = sign * spec.mix_mean + spec.mix_sigma * eta(i, 0);
      d.z0(i, 1) = spec.mix_sigma * eta(i, 1);
    }
    d.ctx = Mat::Zero(N, kContextDim);
    d.sigma_data = 0.5;
    return d;
  }

  if (spec.n < 3)
    throw std::invalid_argument("make_toy_data: trajectory too short");
  const int T = spec.n;
  const double ang = 2.0 * std::numbers::pi / spec.s;
  const double cr = std::cos(ang), sr = std::sin(ang);
  d.traj = Mat::Zero(T, kLatentDim);
  for (int t = 1; t < T; ++t) {
    const double x = d.traj(t - 1, 0), y = d.traj(t - 1, 1);
    d.traj(t, 0) = spec.ar_decay * (cr * x - sr * y) + spec.ar_noise * rng.normal();
    d.traj(t, 1) = spec.ar_decay * (sr * x + cr * y) + spec.ar_noise * rng.normal();
  }
  const int N = T - 2;
  d.z0 = d.traj.bottomRows(N);
  d.ctx.resize(N, kContextDim);
  d.ctx.leftCols(kLatentDim) = d.traj.middleRows(1, N);
  d.ctx.rightCols(kLatentDim) = d.traj.middleRows(0, N);
  Vec mean = d.traj.colwise().mean().transpose();
  double var = 0.0;
  for (int j = 0; j < kLatentDim; ++j)
    var += (d.traj.col(j).array() - mean[j]).square().mean();
  d.sigma_data = std::sqrt(var / kLatentDim);
  return d;
}

struct TrainConfig {
  int epochs = 200;
  int batch = 256;
  double lr = 1e-3;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> epoch_losses;
  double sigma_data = 0.5;
};

/// Minibatch EDM training with log-normal sigma draws and Adam. The whole run
/// is a function of (spec, initial params, train config, seed).
inline TrainResult train_toy(const ToyDatasetSpec& spec,
                             DenoiserParams initial, const TrainConfig& tc,
                             std::uint64_t seed) {
  if (tc.epochs < 1 || tc.batch < 1)
    throw std::invalid_argument("train_toy: epochs and batch must be >= 1");
  ToyData data = make_toy_data(spec);
  const auto N = static_cast<int>(data.z0.rows());
  if (N < 1) throw std::invalid_argument("train_toy: empty dataset");

  TrainResult res;
  res.params = std::move(initial);
  res.sigma_data = data.sigma_data;
  auto plist = res.params.params();
  Adam opt(plist, tc.lr);
  SplitMix64 rng(seed);

  for (int ep = 0; ep < tc.epochs; ++ep) {
    const std::vector<int> perm = permutation(N, rng);
    double tot = 0.0;
    for (int s0 = 0; s0 < N; s0 += tc.batch) {
      const int B = std::min(tc.batch, N - s0);
      Mat z0(B, kLatentDim), ctx(B, kContextDim);
      for (int r = 0; r < B; ++r) {
        const int src = perm[static_cast<std::size_t>(s0 + r)];
        z0.row(r) = data.z0.row(src);
        ctx.row(r) = data.ctx.row(src);
      }
      Vec sigma(B);
      for (int r = 0; r < B; ++r) sigma[r] = std::exp(-1.2 + 1.2 * rng.normal());
      Mat noise = randn(B, kLatentDim, rng);
      Mat zn = z0 + sigma.asDiagonal() * noise;

      Vec lam(B);
      for (int r = 0; r < B; ++r) lam[r] = edm_lambda(sigma[r], data.sigma_data);

      DenoiserCache cache;
      Mat D = denoise(res.params, zn, sigma, spec.s, ctx, data.sigma_data, &cache);
      Mat diff = D - z0;
      const double loss =
          (lam.array() * diff.array().square().rowwise().sum()).mean();
      Mat dD = (2.0 / B) * (lam.asDiagonal() * diff);
      std::vector<Mat> grads = denoise_backward(res.params, dD, cache);
      opt.step(plist, grads);
      tot += loss * B;
    }
    res.epoch_losses.push_back(tot / N);
  }
  return res;
}

}  // namespace wake::latent
