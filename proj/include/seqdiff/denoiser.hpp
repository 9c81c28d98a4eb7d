#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "seqdiff/diffusion.hpp"
#include "seqdiff/field.hpp"
#include "seqdiff/nn.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/score.hpp"

namespace seqdiff {

/// Anything that predicts the forward-process noise eps from (x_tau, tau).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Field predict_noise(const Field& x_tau, double tau, Rates rates) const = 0;
};

struct DenoiserArch {
  int channels = 32;
  int stages = 4;
  /// Number of sinusoid frequencies; the embedding has 2x this many entries.
  int time_frequencies = 8;
};

/// Small convolutional noise predictor:
///
///   h_1 = silu(conv(x) + b_1(tau)), h_2 = silu(conv(h_1) + b_2(tau)), ...
///   eps_hat = conv(h_{S-1}) + sigma_tau * x
///
/// All convolutions are 3x3 with zero padding. b_s(tau) is a learned affine
/// map of a sinusoidal embedding of tau. The sigma_tau * x skip is the exact
/// noise predictor for a unit Gaussian, so the stack learns the deviation.
///
/// Parameters live in one flat vector, stage by stage:
///   conv weight [out][in][3][3], conv bias [out], time weight [out][2F]
/// (no time weight on the final stage).
template <typename Real>
class DenoiserNet final : public NoisePredictor {
 public:
  using Matrix = RowMatrix<Real>;

  explicit DenoiserNet(DenoiserArch arch = {}, std::uint64_t seed = 0);

  const DenoiserArch& arch() const noexcept { return arch_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<Real> parameters() noexcept { return params_; }
  std::span<const Real> parameters() const noexcept { return params_; }

  /// Batched input: `x` is 1 x (batch * H * W), sample-major.
  struct Input {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t batch = 0;
    Matrix x;
    std::vector<double> tau;
    std::vector<double> sigma;
  };

  /// Intermediate values kept by forward() for backward().
  struct Cache {
    std::vector<Matrix> columns;
    std::vector<Matrix> pre_activation;
    Matrix embedding;  // batch x 2F
  };

  /// Returns eps_hat as 1 x (batch * H * W).
  Matrix forward(const Input& input, Cache* cache) const;

  /// Accumulates dL/dparams into `grad_params` and optionally writes dL/dx.
  void backward(const Input& input, const Cache& cache, const Matrix& grad_output,
                std::span<Real> grad_params, Matrix* grad_input) const;

  Field predict_noise(const Field& x_tau, double tau, Rates rates) const override;
  /// (d eps_hat / d x_tau)^T v.
  Field noise_vjp(const Field& x_tau, double tau, Rates rates, const Field& v) const;

  template <typename Other>
  DenoiserNet<Other> cast() const {
    DenoiserNet<Other> out(arch_, 0);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  struct Stage {
    int in_channels;
    int out_channels;
    ParamSlice weight;
    ParamSlice bias;
    ParamSlice time_weight;  // empty on the final stage
  };

  Matrix embed_times(const std::vector<double>& tau) const;

  DenoiserArch arch_;
  std::vector<Stage> stages_;
  std::vector<Real> params_;
};

extern template class DenoiserNet<float>;
extern template class DenoiserNet<double>;

/// One draw of the denoising score-matching corruption for a batch.
struct DsmDraw {
  std::vector<double> tau;
  std::vector<Rates> rates;
  std::vector<Field> noise;
  std::vector<Field> x_tau;
};

/// Lower end of the training tau range, as a fraction of T.
inline constexpr double kTauFloorFraction = 1e-3;

/// tau ~ U[tau_floor, T], eps ~ N(0, I), x_tau = alpha x0 + sigma eps per sample.
DsmDraw draw_dsm(std::span<const Field> x0_batch, const NoiseSchedule& schedule, Rng& rng);

/// Mean over the batch of ||eps_hat - eps||^2, with draws fixed by `seed`.
double dsm_loss(const NoisePredictor& model, std::span<const Field> x0_batch,
                const NoiseSchedule& schedule, std::uint64_t seed);

/// dsm_loss and its parameter gradient (written to `grad`, same layout as parameters()).
template <typename Real>
double dsm_loss_and_gradient(const DenoiserNet<Real>& model, std::span<const Field> x0_batch,
                             const NoiseSchedule& schedule, std::uint64_t seed,
                             std::span<Real> grad);

struct TrainTrace {
  std::vector<double> losses;
};

/// Adam on dsm_loss over minibatches drawn uniformly from `dataset`.
/// Throws NumericalError on a non-finite loss.
template <typename Real>
TrainTrace train_score(DenoiserNet<Real>& model, std::span<const Field> dataset,
                       const TrainConfig& config, const NoiseSchedule& schedule);

/// ScoreModel view of a noise predictor: score = -eps_hat / sigma.
/// Exact linearization (guidance through the network's backward pass) is on
/// by default; with it off, automatic guidance falls back to A^T r / alpha,
/// which can blow up near tau = T.
class NetworkScore final : public ScoreModel {
 public:
  explicit NetworkScore(std::shared_ptr<const DenoiserNet<float>> net,
                        bool exact_linearization = true)
      : net_(std::move(net)), exact_(exact_linearization) {}

  Field score(const Field& x_tau, double tau, Rates rates) const override;
  bool supports_exact_linearization() const noexcept override { return exact_; }
  Field score_vjp(const Field& x_tau, double tau, Rates rates, const Field& v) const override;

  const DenoiserNet<float>& network() const noexcept { return *net_; }

 private:
  std::shared_ptr<const DenoiserNet<float>> net_;
  bool exact_;
};

}  // namespace seqdiff
