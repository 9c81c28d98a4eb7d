#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "seqdiff/diffusion.hpp"
#include "seqdiff/field.hpp"

namespace seqdiff {

/// Evaluates an approximation of grad_x log p(x_tau) for the diffused marginal.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual Field score(const Field& x_tau, double tau, Rates rates) const = 0;

  /// True when score_vjp is available, enabling exact DPS linearization.
  virtual bool supports_exact_linearization() const noexcept { return false; }

  /// Vector-Jacobian product (d score / d x_tau)^T v. Throws InvalidArgument
  /// unless supports_exact_linearization().
  virtual Field score_vjp(const Field& x_tau, double tau, Rates rates, const Field& v) const;
};

/// Gaussian prior N(mean, Sigma) with either diagonal or full covariance.
/// Full covariance is limited to dimension 64.
class GaussianPrior {
 public:
  static constexpr std::size_t kMaxFullDimension = 64;

  static GaussianPrior diagonal(Field mean, std::vector<double> variances);
  static GaussianPrior full(Field mean, const Eigen::MatrixXd& covariance);
  /// N(0, I) shaped like `shape`.
  static GaussianPrior standard(std::size_t height, std::size_t width);

  std::size_t dimension() const noexcept { return mean_.size(); }
  const Field& mean() const noexcept { return mean_; }
  bool is_diagonal() const noexcept { return !covariance_.has_value(); }
  const std::vector<double>& variances() const noexcept { return variances_; }
  /// Dense covariance (materialized from the diagonal when needed).
  Eigen::MatrixXd covariance() const;

 private:
  GaussianPrior() = default;
  Field mean_;
  std::vector<double> variances_;
  std::optional<Eigen::MatrixXd> covariance_;
};

/// -(alpha^2 Sigma + sigma^2 I)^{-1} (x_tau - alpha mu).
Field analytic_score(const GaussianPrior& prior, const Field& x_tau, Rates rates);

/// Exact score of a Gaussian prior pushed through the forward process.
class AnalyticGaussianScore final : public ScoreModel {
 public:
  explicit AnalyticGaussianScore(GaussianPrior prior) : prior_(std::move(prior)) {}

  Field score(const Field& x_tau, double tau, Rates rates) const override;
  bool supports_exact_linearization() const noexcept override { return true; }
  Field score_vjp(const Field& x_tau, double tau, Rates rates, const Field& v) const override;

  const GaussianPrior& prior() const noexcept { return prior_; }

 private:
  GaussianPrior prior_;
};

/// Posterior-mean estimate (x_tau + sigma^2 * score) / alpha.
Field tweedie_estimate(const Field& x_tau, Rates rates, const Field& score);

/// Same estimate written in terms of predicted noise: (x_tau - sigma * eps) / alpha.
Field tweedie_from_noise(const Field& x_tau, Rates rates, const Field& noise);

}  // namespace seqdiff
