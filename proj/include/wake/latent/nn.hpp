#pragma once

#include "wake/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wake::latent {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Glorot-uniform initializer. The scale knob shrinks output layers so a
/// freshly initialized network starts near the identity mapping.
inline Mat glorot(int fan_out, int fan_in, SplitMix64& rng,
                  double scale = 1.0) {
  if (fan_out < 1 || fan_in < 1)
    throw std::invalid_argument("glorot: fan dimensions must be positive");
  const double lim = std::sqrt(6.0 / (fan_in + fan_out)) * scale;
  Mat w(fan_out, fan_in);
  for (int r = 0; r < fan_out; ++r)
    for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-lim, lim);
  return w;
}

/// Adam with bias correction. Parameters are updated in place; the moment
/// buffers are keyed by position in the parameter list.
class Adam {
 public:
  explicit Adam(const std::vector<Mat*>& params, double lr = 1e-3)
      : lr_(lr) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("Adam: parameter list size changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grads[k];
      v_[k] = beta2_ * v_[k].array().matrix() +
              (1.0 - beta2_) * grads[k].array().square().matrix();
      const Mat mh = m_[k] / bc1;
      const Mat vh = v_[k] / bc2;
      params[k]->array() -=
          lr_ * mh.array() / (vh.array().sqrt() + eps_);
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int t_ = 0;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
};

/// Standard normal matrix draw, row-major fill order.
inline Mat randn(int rows, int cols, SplitMix64& rng) {
  Mat out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = rng.normal();
  return out;
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<int> permutation(int n, SplitMix64& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_u64() %
                                    static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace wake::latent
