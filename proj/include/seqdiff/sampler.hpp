#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqdiff/diffusion.hpp"
#include "seqdiff/field.hpp"
#include "seqdiff/measurement.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/score.hpp"
#include "seqdiff/transition.hpp"

namespace seqdiff {

enum class InitVariant { vanilla, ccdf, seqdiff, seqdiff_plus };

/// "vanilla", "ccdf", "seqdiff", "seqdiffplus".
std::string variant_name(InitVariant variant);
/// Inverse of variant_name; throws InvalidArgument on unknown names.
InitVariant parse_variant(const std::string& name);

/// Where a trajectory starts and which mean it is centred on.
///
///   vanilla       mean 0 at tau = T
///   ccdf          mean adjoint_fill(y) at tau'
///   seqdiff       mean of the previous posterior estimate at tau'
///   seqdiff_plus  mean predicted by a transition model at tau'
///
/// Context pointers are borrowed and only read inside make_init.
struct InitStrategy {
  InitVariant variant = InitVariant::vanilla;
  double tau_prime = 0.04;
  /// Overrides N'. For vanilla the full [0, T] range is then covered in this
  /// many steps; for the others it is the start index on the base grid.
  /// Zero is allowed and means "return the mean".
  std::optional<int> steps;
  std::size_t height = 0;  // shape for vanilla when no other context is given
  std::size_t width = 0;
  const Field* previous_estimate = nullptr;  // model space
  const Observation* observation = nullptr;
  const TransitionModel* transition = nullptr;
  const HistoryBuffer* history = nullptr;
};

/// x at grid point `step_index` of `grid`, i.e. at tau = grid.time_at_step(step_index).
struct TrajectoryState {
  Field x;
  int step_index = 0;
  Rng rng{0};
  NoiseSchedule grid = default_schedule();
  Field mean;  // initialization mean, returned as-is when no steps run
};

enum class GuidanceNormalization { residual_norm, none };
/// automatic: exact when the score model supports it, identity otherwise.
enum class JacobianMode { automatic, exact_linearization, identity_approximation };

struct GuidanceConfig {
  double zeta_scale = 1.0;
  GuidanceNormalization normalization = GuidanceNormalization::residual_norm;
  JacobianMode jacobian_mode = JacobianMode::automatic;
};

/// Throws InvalidArgument unless zeta_scale > 0.
void validate(const GuidanceConfig& config);

/// Throws MissingContext when the variant's context is absent.
TrajectoryState make_init(const InitStrategy& strategy, const NoiseSchedule& schedule,
                          std::uint64_t seed);

struct GuidanceResult {
  Field field;     // added to x_tau
  Field estimate;  // Tweedie estimate the residual was formed at
  double residual_norm = 0.0;
};

/// zeta * J^T A^T (y - A x0_hat): the descent direction of 0.5 ||y - A x0_hat||^2
/// in x_tau. J is the Jacobian of the Tweedie estimate (exact mode) or I / alpha.
GuidanceResult dps_guidance(const Observation& y, const Field& x_tau, const Field& score,
                            const ScoreModel& model, double tau, Rates rates,
                            const GuidanceConfig& config);
Field dps_gradient(const Observation& y, const Field& x_tau, const ScoreModel& model, double tau,
                   Rates rates, const GuidanceConfig& config);

/// One Euler-Maruyama step of the reverse SDE from grid point k to k - 1,
/// given the score at the current state. No noise is injected on the final
/// step. `guidance` (if non-null) is added after the update.
/// Throws DivergenceError on non-finite output.
void reverse_step(TrajectoryState& state, const Field& score, const Field* guidance);
void reverse_step(TrajectoryState& state, const ScoreModel& model, const Field* guidance);

struct TrajectoryResult {
  Field estimate;       // model space, unclamped
  Field data_estimate;  // data space, clamped to [0, 1]
  Field terminal;       // x at tau = 0
  int steps = 0;
  int score_evaluations = 0;
  int vjp_evaluations = 0;
};

/// Runs the remaining steps of `state`, with DPS guidance when `y` is given.
/// The estimate is the Tweedie estimate at the last visited time tau_1
/// (plus that step's guidance), not the raw terminal state.
TrajectoryResult run_trajectory(TrajectoryState state, const ScoreModel& model,
                                const Observation* y, const GuidanceConfig& config);

struct SequenceOptions {
  InitVariant variant = InitVariant::seqdiff;
  double tau_prime = 0.04;
  std::optional<int> steps;
  std::size_t context = 4;  // K
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  std::uint64_t sequence_id = 0;
};

struct FrameReport {
  int frame_index = 0;
  InitVariant variant_used = InitVariant::vanilla;
  int n_prime = 0;
  int score_evaluations = 0;
  double wall_seconds = 0.0;
};

struct SequenceResult {
  std::vector<Field> estimates;        // data space
  std::vector<Field> model_estimates;  // model space, unclamped
  std::vector<FrameReport> frames;
};

/// Reconstructs frames in order. Frames without the context their variant
/// needs (frame 0 for seqdiff and seqdiff_plus) run a full vanilla
/// trajectory. Each frame draws from derive_seed(seed, {sequence_id, frame}).
SequenceResult reconstruct_sequence(const std::vector<Observation>& observations,
                                    const ScoreModel& model, const TransitionModel* transition,
                                    const NoiseSchedule& schedule, const SequenceOptions& options);

}  // namespace seqdiff
