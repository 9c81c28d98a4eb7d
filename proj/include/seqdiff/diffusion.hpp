#pragma once

#include "seqdiff/field.hpp"

namespace seqdiff {

/// Signal and noise rates of the variance-preserving forward process,
/// x_tau = alpha * x_0 + sigma * eps with alpha^2 + sigma^2 = 1.
struct Rates {
  double alpha = 1.0;
  double sigma = 0.0;
};

/// Linear beta ramp beta(tau) = beta_min + (beta_max - beta_min) * tau / T on
/// [0, T], discretized into `steps` equispaced reverse steps.
class NoiseSchedule {
 public:
  NoiseSchedule(double beta_min, double beta_max, double horizon, int steps);

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }
  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double step_size() const noexcept { return horizon_ / steps_; }
  /// Diffusion time of grid point k (k = 0 .. steps).
  double time_at_step(int k) const noexcept { return step_size() * k; }

  double beta(double tau) const noexcept;
  /// Closed-form integral of beta over [0, tau].
  double integrated_beta(double tau) const noexcept;

  /// Same ramp with a different step count.
  NoiseSchedule with_steps(int steps) const;

 private:
  double beta_min_;
  double beta_max_;
  double horizon_;
  int steps_;
};

NoiseSchedule make_schedule(double beta_min, double beta_max, double horizon, int steps);

/// Conventional VP-SDE constants: beta in [0.1, 20], T = 1, N = 100.
NoiseSchedule default_schedule();

/// sigma^2 = 1 - exp(-int beta), alpha = sqrt(1 - sigma^2). Rejects tau outside [0, T].
Rates rates_at(const NoiseSchedule& schedule, double tau);

/// alpha * x0 + sigma * noise.
Field forward_diffuse(const Field& x0, Rates rates, const Field& noise);

/// N' = round(N * tau' / T) clamped to [1, N]. Rejects tau' <= 0.
int steps_from_tau(const NoiseSchedule& schedule, double tau_prime);

}  // namespace seqdiff
