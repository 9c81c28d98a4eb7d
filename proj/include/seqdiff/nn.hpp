#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace seqdiff {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatrixMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Real>>;

/// Optimization settings shared by the score and transition trainers.
struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int iterations = 1000;
  std::uint64_t seed = 0;
  /// Anneal the learning rate to zero along a half cosine.
  bool cosine_decay = false;
};

/// Learning rate for iteration `it` of `config.iterations`.
inline double learning_rate_at(const TrainConfig& config, int it) {
  if (!config.cosine_decay || config.iterations <= 1) return config.learning_rate;
  const double progress = static_cast<double>(it) / static_cast<double>(config.iterations - 1);
  return 0.5 * config.learning_rate * (1.0 + std::cos(3.141592653589793 * progress));
}

/// Adam with bias correction over a flat parameter vector.
template <typename Real>
class Adam {
 public:
  Adam(std::size_t parameter_count, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon),
        m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

  void step(std::span<Real> params, std::span<const Real> grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] = static_cast<Real>(params[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }

  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Fills `out` with N(0, scale^2) draws.
template <typename Real>
void fill_normal(std::span<Real> out, double scale, std::mt19937_64& engine) {
  std::normal_distribution<double> dist(0.0, scale);
  for (Real& v : out) v = static_cast<Real>(dist(engine));
}

/// Named contiguous slice of a flat parameter vector.
struct ParamSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

inline ParamSlice take_slice(std::size_t& cursor, std::size_t size) {
  ParamSlice s{cursor, size};
  cursor += size;
  return s;
}

}  // namespace seqdiff
