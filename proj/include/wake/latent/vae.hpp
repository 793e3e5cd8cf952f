#pragma once

#include "wake/latent/nn.hpp"
#include "wake/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wake::latent {

/// Diagonal Gaussian q(z|x) = N(mu, diag(sigma^2)).
struct GaussianPosterior {
  Vec mu;
  Vec sigma;
};

/// KL(q || N(0, I)) in closed form: sum_j 0.5 (mu^2 + sigma^2 - 1 - ln sigma^2).
inline double gaussian_kl_to_prior(const GaussianPosterior& q) {
  if (q.mu.size() != q.sigma.size())
    throw std::invalid_argument("gaussian_kl_to_prior: mu/sigma size mismatch");
  if (q.mu.size() == 0)
    throw std::invalid_argument("gaussian_kl_to_prior: empty posterior");
  double kl = 0.0;
  for (Eigen::Index j = 0; j < q.mu.size(); ++j) {
    const double s = q.sigma[j];
    if (!(s > 0.0))
      throw std::domain_error("gaussian_kl_to_prior: sigma must be positive");
    kl += 0.5 * (q.mu[j] * q.mu[j] + s * s - 1.0 - 2.0 * std::log(s));
  }
  return kl;
}

struct KlDecomposition {
  double mutual_information = 0.0;
  double total_correlation = 0.0;
  double dimwise_kl = 0.0;
  double mi_se = 0.0;
  double tc_se = 0.0;
  double dimwise_se = 0.0;
  int n_mc = 0;
};

namespace detail {

inline double log_normal_pdf(double z, double mu, double sigma) {
  const double d = (z - mu) / sigma;
  return -0.5 * d * d - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double log_std_normal_pdf(double z) {
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// log(1/M sum_m exp(v_m)) with max-shift stabilization.
inline double log_mean_exp(const Vec& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (Eigen::Index m = 0; m < v.size(); ++m) acc += std::exp(v[m] - mx);
  return mx + std::log(acc / static_cast<double>(v.size()));
}

}  // namespace detail

/// Monte-Carlo decomposition of the aggregate KL into mutual information,
/// total correlation, and dimension-wise KL. The batch of posteriors stands
/// in for the dataset: q(z) is the equal-weight mixture over the batch, and
/// each draw pairs a component i = t mod M with fresh reparameterized noise.
/// Standard errors are sample standard deviations of the per-draw terms
/// divided by sqrt(n_mc).
inline KlDecomposition kl_decomposition_estimate(
    const std::vector<GaussianPosterior>& batch, int n_mc,
    std::uint64_t seed) {
  const auto M = static_cast<int>(batch.size());
  if (M < 2)
    throw std::invalid_argument(
        "kl_decomposition_estimate: need at least two posteriors");
  if (n_mc < 1)
    throw std::invalid_argument("kl_decomposition_estimate: n_mc must be >= 1");
  const auto dz = static_cast<int>(batch[0].mu.size());
  if (dz < 1)
    throw std::invalid_argument("kl_decomposition_estimate: empty posterior");
  for (const auto& q : batch) {
    if (static_cast<int>(q.mu.size()) != dz ||
        static_cast<int>(q.sigma.size()) != dz)
      throw std::invalid_argument(
          "kl_decomposition_estimate: inconsistent latent dimension");
    for (int j = 0; j < dz; ++j)
      if (!(q.sigma[j] > 0.0))
        throw std::domain_error(
            "kl_decomposition_estimate: sigma must be positive");
  }

  SplitMix64 rng(seed);
  double mi_sum = 0.0, mi_sq = 0.0;
  double tc_sum = 0.0, tc_sq = 0.0;
  double dw_sum = 0.0, dw_sq = 0.0;

  // Hoist the per-component constants out of the Monte-Carlo loop; the loop
  // body is then pure arithmetic plus the unavoidable log-sum-exp.
  Mat MU(M, dz), INV_S(M, dz), LOGNORM(M, dz);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (int m = 0; m < M; ++m)
    for (int j = 0; j < dz; ++j) {
      const auto& q = batch[static_cast<std::size_t>(m)];
      MU(m, j) = q.mu[j];
      INV_S(m, j) = 1.0 / q.sigma[j];
      LOGNORM(m, j) = -std::log(q.sigma[j]) - half_log_2pi;
    }

  Vec z(dz);
  Vec joint(M);                // per-component joint log density
  Mat per_dim(M, dz);          // per-component per-dim log density

  for (int t = 0; t < n_mc; ++t) {
    const int i = t % M;
    for (int j = 0; j < dz; ++j)
      z[j] = batch[static_cast<std::size_t>(i)].mu[j] +
             batch[static_cast<std::size_t>(i)].sigma[j] * rng.normal();

    for (int m = 0; m < M; ++m) {
      double acc = 0.0;
      for (int j = 0; j < dz; ++j) {
        const double d = (z[j] - MU(m, j)) * INV_S(m, j);
        const double lp = -0.5 * d * d + LOGNORM(m, j);
        per_dim(m, j) = lp;
        acc += lp;
      }
      joint[m] = acc;
    }

    const double log_q_joint = detail::log_mean_exp(joint);
    double log_q_prod = 0.0;
    double log_prior = 0.0;
    for (int j = 0; j < dz; ++j) {
      log_q_prod += detail::log_mean_exp(per_dim.col(j));
      log_prior += detail::log_std_normal_pdf(z[j]);
    }
    const double log_q_cond = joint[i];

    const double mi = log_q_cond - log_q_joint;
    const double tc = log_q_joint - log_q_prod;
    const double dw = log_q_prod - log_prior;
    mi_sum += mi;
    mi_sq += mi * mi;
    tc_sum += tc;
    tc_sq += tc * tc;
    dw_sum += dw;
    dw_sq += dw * dw;
  }

  const double n = static_cast<double>(n_mc);
  auto finish = [n](double s, double sq, double& mean, double& se) {
    mean = s / n;
    const double var = std::max(0.0, sq / n - mean * mean);
    se = n > 1.0 ? std::sqrt(var / (n - 1.0)) : std::numeric_limits<double>::infinity();
  };
  KlDecomposition out;
  out.n_mc = n_mc;
  finish(mi_sum, mi_sq, out.mutual_information, out.mi_se);
  finish(tc_sum, tc_sq, out.total_correlation, out.tc_se);
  finish(dw_sum, dw_sq, out.dimwise_kl, out.dimwise_se);
  return out;
}

/// Weights on the three KL pieces. beta > 1 with alpha = 0 is the usual
/// disentanglement setting: punish cross-dimension dependence, keep the
/// index-code term free.
struct TcWeights {
  double alpha = 0.0;
  double beta = 15.0;
  double gamma = 1.0;
};

/// Two-layer tanh encoder producing (mu, log sigma), mirrored decoder.
struct VaeParams {
  int d_x = 0;
  int d_h = 0;
  int d_z = 0;
  Mat We1, be1;  // d_h x d_x, d_h x 1
  Mat We2, be2;  // 2 d_z x d_h
  Mat Wd1, bd1;  // d_h x d_z
  Mat Wd2, bd2;  // d_x x d_h

  static VaeParams init(int d_x, int d_h, int d_z, std::uint64_t seed) {
    if (d_x < 1 || d_h < 1 || d_z < 1)
      throw std::invalid_argument("VaeParams::init: dimensions must be >= 1");
    SplitMix64 rng(seed);
    VaeParams p;
    p.d_x = d_x;
    p.d_h = d_h;
    p.d_z = d_z;
    p.We1 = glorot(d_h, d_x, rng);
    p.be1 = Mat::Zero(d_h, 1);
    p.We2 = glorot(2 * d_z, d_h, rng);
    p.be2 = Mat::Zero(2 * d_z, 1);
    p.Wd1 = glorot(d_h, d_z, rng);
    p.bd1 = Mat::Zero(d_h, 1);
    p.Wd2 = glorot(d_x, d_h, rng);
    p.bd2 = Mat::Zero(d_x, 1);
    return p;
  }

  std::vector<Mat*> params() {
    return {&We1, &be1, &We2, &be2, &Wd1, &bd1, &Wd2, &bd2};
  }
  std::vector<const Mat*> params() const {
    return {&We1, &be1, &We2, &be2, &Wd1, &bd1, &Wd2, &bd2};
  }
};

struct TcvaeTerms {
  double loss = 0.0;
  double recon_log_lik = 0.0;
  double mutual_information = 0.0;
  double total_correlation = 0.0;
  double dimwise_kl = 0.0;
};

/// Minibatch objective: negative Gaussian reconstruction log-likelihood plus
/// the weighted KL pieces, all estimated on the batch itself (the batch plays
/// the role of the dataset in the mixture q(z)). One reparameterized draw per
/// row, noise from `mc_seed`. When `grads` is non-null it receives d loss /
/// d param in the order of VaeParams::params().
inline TcvaeTerms tcvae_loss(const Mat& X, const VaeParams& p,
                             const TcWeights& w, std::uint64_t mc_seed,
                             std::vector<Mat>* grads = nullptr) {
  const auto M = static_cast<int>(X.rows());
  if (M < 2)
    throw std::invalid_argument("tcvae_loss: batch must have at least 2 rows");
  if (static_cast<int>(X.cols()) != p.d_x)
    throw std::invalid_argument("tcvae_loss: batch width does not match d_x");
  const int dz = p.d_z;
  const double Md = static_cast<double>(M);
  const double logM = std::log(Md);

  // Encoder.
  Mat H1 = ((X * p.We1.transpose()).rowwise() +
            p.be1.col(0).transpose()).array().tanh().matrix();
  Mat ML = (H1 * p.We2.transpose()).rowwise() + p.be2.col(0).transpose();
  Mat Mu = ML.leftCols(dz);
  Mat Lam = ML.rightCols(dz);
  Mat Sigma = Lam.array().exp().matrix();

  SplitMix64 rng(mc_seed);
  Mat Eps = randn(M, dz, rng);
  Mat Z = Mu + Sigma.cwiseProduct(Eps);

  // Decoder.
  Mat H2 = ((Z * p.Wd1.transpose()).rowwise() +
            p.bd1.col(0).transpose()).array().tanh().matrix();
  Mat Xhat = (H2 * p.Wd2.transpose()).rowwise() + p.bd2.col(0).transpose();

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const double sq_err = (Xhat - X).squaredNorm();
  const double recon_ll =
      -(0.5 * sq_err) / Md - static_cast<double>(p.d_x) * half_log_2pi;

  // Pairwise log densities: G[j](i,m) = log q_j(z_i | x_m), N = sum_j G[j].
  std::vector<Mat> G(static_cast<std::size_t>(dz), Mat(M, M));
  Mat N = Mat::Zero(M, M);
  for (int i = 0; i < M; ++i)
    for (int m = 0; m < M; ++m) {
      double acc = 0.0;
      for (int j = 0; j < dz; ++j) {
        const double lp =
            detail::log_normal_pdf(Z(i, j), Mu(m, j), Sigma(m, j));
        G[static_cast<std::size_t>(j)](i, m) = lp;
        acc += lp;
      }
      N(i, m) = acc;
    }

  // Per-row aggregates: A_i = log q(z_i), B_ij = log q_j(z_ij), P_i = log p(z_i).
  Vec A(M), Pr(M);
  Mat B(M, dz);
  for (int i = 0; i < M; ++i) {
    A[i] = detail::log_mean_exp(N.row(i).transpose());
    double pacc = 0.0;
    for (int j = 0; j < dz; ++j) {
      B(i, j) = detail::log_mean_exp(
          G[static_cast<std::size_t>(j)].row(i).transpose());
      pacc += detail::log_std_normal_pdf(Z(i, j));
    }
    Pr[i] = pacc;
  }

  double mi = 0.0, tc = 0.0, dw = 0.0;
  for (int i = 0; i < M; ++i) {
    mi += N(i, i) - A[i];
    tc += A[i] - B.row(i).sum();
    dw += B.row(i).sum() - Pr[i];
  }
  mi /= Md;
  tc /= Md;
  dw /= Md;

  TcvaeTerms out;
  out.recon_log_lik = recon_ll;
  out.mutual_information = mi;
  out.total_correlation = tc;
  out.dimwise_kl = dw;
  out.loss = -recon_ll + w.alpha * mi + w.beta * tc + w.gamma * dw;
  if (!grads) return out;

  // Backward. Direct sensitivities of the loss to the aggregates:
  //   dL/dN(i,i) += alpha / M          (index term of MI)
  //   dL/dA_i     = (beta - alpha) / M
  //   dL/dB_ij    = (gamma - beta) / M
  //   dL/dP_i     = -gamma / M
  // A and B are log-mean-exps, so their pulls distribute over components with
  // softmax weights exp(entry - (aggregate + log M)).
  Mat dZ = Mat::Zero(M, dz);
  Mat dMu = Mat::Zero(M, dz);
  Mat dSigma = Mat::Zero(M, dz);

  const double dA = (w.beta - w.alpha) / Md;
  const double dB = (w.gamma - w.beta) / Md;
  const double dP = -w.gamma / Md;
  const double dNdiag = w.alpha / Md;

  for (int i = 0; i < M; ++i) {
    for (int m = 0; m < M; ++m) {
      // Weight flowing into the joint density log q(z_i | x_m).
      double gN = dA * std::exp(N(i, m) - (A[i] + logM));
      if (m == i) gN += dNdiag;
      for (int j = 0; j < dz; ++j) {
        double g = gN +
                   dB * std::exp(G[static_cast<std::size_t>(j)](i, m) -
                                 (B(i, j) + logM));
        if (g == 0.0) continue;
        const double s = Sigma(m, j);
        const double r = (Z(i, j) - Mu(m, j)) / (s * s);
        dZ(i, j) += g * (-r);
        dMu(m, j) += g * r;
        dSigma(m, j) += g * (r * r * s - 1.0 / s);
      }
    }
    for (int j = 0; j < dz; ++j) dZ(i, j) += dP * (-Z(i, j));
  }

  // Reconstruction path.
  Mat dXhat = (Xhat - X) / Md;
  Mat dWd2 = dXhat.transpose() * H2;
  Mat dbd2 = dXhat.colwise().sum().transpose();
  Mat dH2 = dXhat * p.Wd2;
  Mat dA2 = dH2.cwiseProduct((1.0 - H2.array().square()).matrix());
  Mat dWd1 = dA2.transpose() * Z;
  Mat dbd1 = dA2.colwise().sum().transpose();
  dZ += dA2 * p.Wd1;

  // Reparameterization and encoder.
  dMu += dZ;
  dSigma += dZ.cwiseProduct(Eps);
  Mat dLam = dSigma.cwiseProduct(Sigma);
  Mat dML(M, 2 * dz);
  dML << dMu, dLam;
  Mat dWe2 = dML.transpose() * H1;
  Mat dbe2 = dML.colwise().sum().transpose();
  Mat dH1 = dML * p.We2;
  Mat dA1 = dH1.cwiseProduct((1.0 - H1.array().square()).matrix());
  Mat dWe1 = dA1.transpose() * X;
  Mat dbe1 = dA1.colwise().sum().transpose();

  grads->clear();
  grads->push_back(dWe1);
  grads->push_back(dbe1);
  grads->push_back(dWe2);
  grads->push_back(dbe2);
  grads->push_back(dWd1);
  grads->push_back(dbd1);
  grads->push_back(dWd2);
  grads->push_back(dbd2);
  return out;
}

}  // namespace wake::latent
