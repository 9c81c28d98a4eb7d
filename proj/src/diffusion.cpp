#include "seqdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqdiff/error.hpp"

namespace seqdiff {

NoiseSchedule::NoiseSchedule(double beta_min, double beta_max, double horizon, int steps)
    : beta_min_(beta_min), beta_max_(beta_max), horizon_(horizon), steps_(steps) {
  if (!(beta_min > 0.0)) throw InvalidArgument("noise schedule: beta_min must be positive");
  if (!(beta_max >= beta_min)) throw InvalidArgument("noise schedule: beta_max < beta_min");
  if (!(horizon > 0.0)) throw InvalidArgument("noise schedule: horizon must be positive");
  if (steps < 1) throw InvalidArgument("noise schedule: steps must be at least 1");
}

double NoiseSchedule::beta(double tau) const noexcept {
  return beta_min_ + (beta_max_ - beta_min_) * (tau / horizon_);
}

double NoiseSchedule::integrated_beta(double tau) const noexcept {
  return beta_min_ * tau + 0.5 * (beta_max_ - beta_min_) * tau * tau / horizon_;
}

NoiseSchedule NoiseSchedule::with_steps(int steps) const {
  return NoiseSchedule(beta_min_, beta_max_, horizon_, steps);
}

NoiseSchedule make_schedule(double beta_min, double beta_max, double horizon, int steps) {
  return NoiseSchedule(beta_min, beta_max, horizon, steps);
}

NoiseSchedule default_schedule() { return NoiseSchedule(0.1, 20.0, 1.0, 100); }

Rates rates_at(const NoiseSchedule& schedule, double tau) {
  // Tolerate accumulated rounding on grid points such as k * (T/N).
  const double slack = 1e-12 * schedule.horizon();
  if (!(tau >= -slack && tau <= schedule.horizon() + slack)) {
    throw InvalidArgument("rates_at: tau " + std::to_string(tau) + " outside [0, T]");
  }
  tau = std::clamp(tau, 0.0, schedule.horizon());
  const double integral = schedule.integrated_beta(tau);
  Rates r;
  r.alpha = std::exp(-0.5 * integral);
  r.sigma = std::sqrt(-std::expm1(-integral));
  return r;
}

Field forward_diffuse(const Field& x0, Rates rates, const Field& noise) {
  require_same_shape(x0, noise, "forward_diffuse");
  Field out(x0.height(), x0.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rates.alpha * x0[i] + rates.sigma * noise[i];
  return out;
}

int steps_from_tau(const NoiseSchedule& schedule, double tau_prime) {
  if (!(tau_prime > 0.0)) throw InvalidArgument("steps_from_tau: tau' must be positive");
  const double raw = schedule.steps() * tau_prime / schedule.horizon();
  const long n = std::lround(raw);
  return static_cast<int>(std::clamp<long>(n, 1, schedule.steps()));
}

}  // namespace seqdiff
