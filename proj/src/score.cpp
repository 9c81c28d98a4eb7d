#include "seqdiff/score.hpp"

#include <cmath>
#include <string>

#include "seqdiff/error.hpp"

namespace seqdiff {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(const Field& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

void require_dimension(const GaussianPrior& prior, const Field& x, const char* context) {
  if (x.size() != prior.dimension()) {
    throw ShapeMismatch(std::string(context) + ": prior dimension " +
                        std::to_string(prior.dimension()) + " vs field size " +
                        std::to_string(x.size()));
  }
}

Eigen::LLT<Eigen::MatrixXd> diffused_covariance_factor(const GaussianPrior& prior, Rates r) {
  Eigen::MatrixXd c = r.alpha * r.alpha * prior.covariance();
  c.diagonal().array() += r.sigma * r.sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw NumericalError("analytic score: singular covariance");
  return llt;
}

}  // namespace

Field ScoreModel::score_vjp(const Field&, double, Rates, const Field&) const {
  throw InvalidArgument("score model does not support exact linearization");
}

GaussianPrior GaussianPrior::diagonal(Field mean, std::vector<double> variances) {
  if (variances.size() != mean.size()) {
    throw ShapeMismatch("gaussian prior: variance count does not match mean size");
  }
  for (double v : variances) {
    if (!(v > 0.0)) throw InvalidArgument("gaussian prior: variances must be positive");
  }
  GaussianPrior p;
  p.mean_ = std::move(mean);
  p.variances_ = std::move(variances);
  return p;
}

GaussianPrior GaussianPrior::full(Field mean, const Eigen::MatrixXd& covariance) {
  const auto d = static_cast<Eigen::Index>(mean.size());
  if (mean.size() > kMaxFullDimension) {
    throw InvalidArgument("gaussian prior: full covariance limited to dimension 64");
  }
  if (covariance.rows() != d || covariance.cols() != d) {
    throw ShapeMismatch("gaussian prior: covariance shape does not match mean size");
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw InvalidArgument("gaussian prior: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw InvalidArgument("gaussian prior: covariance is not positive definite");
  }
  GaussianPrior p;
  p.mean_ = std::move(mean);
  p.variances_.assign(covariance.diagonal().data(), covariance.diagonal().data() + d);
  p.covariance_ = covariance;
  return p;
}

GaussianPrior GaussianPrior::standard(std::size_t height, std::size_t width) {
  return diagonal(Field(height, width, 0.0), std::vector<double>(height * width, 1.0));
}

Eigen::MatrixXd GaussianPrior::covariance() const {
  if (covariance_) return *covariance_;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dimension()),
                                            static_cast<Eigen::Index>(dimension()));
  for (std::size_t i = 0; i < dimension(); ++i) c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = variances_[i];
  return c;
}

Field analytic_score(const GaussianPrior& prior, const Field& x_tau, Rates r) {
  require_dimension(prior, x_tau, "analytic_score");
  Field out(x_tau.height(), x_tau.width());
  const double a2 = r.alpha * r.alpha;
  const double s2 = r.sigma * r.sigma;
  if (prior.is_diagonal()) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = -(x_tau[i] - r.alpha * prior.mean()[i]) / (a2 * prior.variances()[i] + s2);
    }
    return out;
  }
  const Eigen::VectorXd centered = as_vector(x_tau) - r.alpha * as_vector(prior.mean());
  const Eigen::VectorXd s = -diffused_covariance_factor(prior, r).solve(centered);
  Eigen::Map<Eigen::VectorXd>(out.data(), s.size()) = s;
  return out;
}

Field AnalyticGaussianScore::score(const Field& x_tau, double, Rates rates) const {
  return analytic_score(prior_, x_tau, rates);
}

Field AnalyticGaussianScore::score_vjp(const Field& x_tau, double, Rates r, const Field& v) const {
  require_dimension(prior_, x_tau, "score_vjp");
  require_same_shape(x_tau, v, "score_vjp");
  // The score is affine in x_tau with symmetric Jacobian -(alpha^2 Sigma + sigma^2 I)^{-1}.
  Field out(v.height(), v.width());
  if (prior_.is_diagonal()) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = -v[i] / (r.alpha * r.alpha * prior_.variances()[i] + r.sigma * r.sigma);
    }
    return out;
  }
  const Eigen::VectorXd s = -diffused_covariance_factor(prior_, r).solve(as_vector(v));
  Eigen::Map<Eigen::VectorXd>(out.data(), s.size()) = s;
  return out;
}

Field tweedie_estimate(const Field& x_tau, Rates rates, const Field& score) {
  require_same_shape(x_tau, score, "tweedie_estimate");
  if (!(rates.alpha > 0.0)) throw InvalidArgument("tweedie_estimate: alpha must be positive");
  Field out(x_tau.height(), x_tau.width());
  const double s2 = rates.sigma * rates.sigma;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_tau[i] + s2 * score[i]) / rates.alpha;
  return out;
}

Field tweedie_from_noise(const Field& x_tau, Rates rates, const Field& noise) {
  require_same_shape(x_tau, noise, "tweedie_from_noise");
  if (!(rates.alpha > 0.0)) throw InvalidArgument("tweedie_from_noise: alpha must be positive");
  Field out(x_tau.height(), x_tau.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_tau[i] - rates.sigma * noise[i]) / rates.alpha;
  return out;
}

}  // namespace seqdiff
