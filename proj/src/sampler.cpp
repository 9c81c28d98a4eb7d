#include "seqdiff/sampler.hpp"

#include <chrono>
#include <cmath>

#include "seqdiff/error.hpp"

namespace seqdiff {

std::string variant_name(InitVariant variant) {
  switch (variant) {
    case InitVariant::vanilla: return "vanilla";
    case InitVariant::ccdf: return "ccdf";
    case InitVariant::seqdiff: return "seqdiff";
    case InitVariant::seqdiff_plus: return "seqdiffplus";
  }
  return "unknown";
}

InitVariant parse_variant(const std::string& name) {
  for (InitVariant v : {InitVariant::vanilla, InitVariant::ccdf, InitVariant::seqdiff,
                        InitVariant::seqdiff_plus}) {
    if (variant_name(v) == name) return v;
  }
  throw InvalidArgument("unknown strategy '" + name + "'");
}

void validate(const GuidanceConfig& config) {
  if (!(config.zeta_scale > 0.0) || !std::isfinite(config.zeta_scale)) {
    throw InvalidArgument("guidance: zeta_scale must be positive");
  }
}

namespace {

Field init_mean(const InitStrategy& s) {
  switch (s.variant) {
    case InitVariant::vanilla: {
      std::size_t h = s.height, w = s.width;
      if (s.observation && s.observation->op) {
        h = s.observation->op->height();
        w = s.observation->op->width();
      }
      if (h == 0 || w == 0) throw MissingContext("vanilla init: unknown image shape");
      return Field(h, w, 0.0);
    }
    case InitVariant::ccdf:
      if (!s.observation || !s.observation->op) throw MissingContext("ccdf init: no observation");
      return adjoint_fill(*s.observation->op, s.observation->values);
    case InitVariant::seqdiff:
      if (!s.previous_estimate) throw MissingContext("seqdiff init: no previous estimate");
      return *s.previous_estimate;
    case InitVariant::seqdiff_plus:
      if (!s.transition) throw MissingContext("seqdiff+ init: no transition model");
      if (!s.history || s.history->empty()) throw MissingContext("seqdiff+ init: empty history");
      return s.transition->predict(*s.history);
  }
  throw InvalidArgument("init: unknown variant");
}

}  // namespace

TrajectoryState make_init(const InitStrategy& strategy, const NoiseSchedule& schedule,
                          std::uint64_t seed) {
  if (strategy.steps && (*strategy.steps < 0 || *strategy.steps > schedule.steps())) {
    throw InvalidArgument("init: step override must lie in [0, N]");
  }
  TrajectoryState state{init_mean(strategy), 0, Rng(seed), schedule, Field()};
  state.mean = state.x;
  int n_prime = 0;
  if (strategy.variant == InitVariant::vanilla) {
    n_prime = strategy.steps.value_or(schedule.steps());
    if (n_prime > 0) state.grid = schedule.with_steps(n_prime);
  } else {
    if (!(strategy.tau_prime > 0.0) || strategy.tau_prime > schedule.horizon()) {
      throw InvalidArgument("init: tau' must lie in (0, T]");
    }
    n_prime = strategy.steps ? *strategy.steps : steps_from_tau(schedule, strategy.tau_prime);
  }
  state.step_index = n_prime;
  if (n_prime == 0) return state;
  const Rates r = rates_at(state.grid, state.grid.time_at_step(n_prime));
  for (std::size_t i = 0; i < state.x.size(); ++i) {
    state.x[i] = r.alpha * state.x[i] + r.sigma * state.rng.normal();
  }
  return state;
}

GuidanceResult dps_guidance(const Observation& y, const Field& x_tau, const Field& score,
                            const ScoreModel& model, double tau, Rates rates,
                            const GuidanceConfig& config) {
  validate(config);
  if (!y.op) throw InvalidArgument("guidance: observation has no operator");
  GuidanceResult out;
  out.estimate = tweedie_estimate(x_tau, rates, score);
  std::vector<double> residual = apply_forward(*y.op, out.estimate);
  if (residual.size() != y.values.size()) throw ShapeMismatch("guidance: measurement count mismatch");
  double rr = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    residual[i] = y.values[i] - residual[i];
    rr += residual[i] * residual[i];
  }
  out.residual_norm = std::sqrt(rr);
  double zeta = config.zeta_scale;
  if (config.normalization == GuidanceNormalization::residual_norm) {
    if (out.residual_norm == 0.0) {
      out.field = Field(x_tau.height(), x_tau.width(), 0.0);
      return out;
    }
    zeta /= out.residual_norm;
  }
  Field v = apply_adjoint(*y.op, residual);
  const bool exact = config.jacobian_mode == JacobianMode::exact_linearization ||
                     (config.jacobian_mode == JacobianMode::automatic &&
                      model.supports_exact_linearization());
  if (exact) {
    const Field jv = model.score_vjp(x_tau, tau, rates, v);
    v.add_scaled(jv, rates.sigma * rates.sigma);
  }
  v *= zeta / rates.alpha;
  out.field = std::move(v);
  return out;
}

Field dps_gradient(const Observation& y, const Field& x_tau, const ScoreModel& model, double tau,
                   Rates rates, const GuidanceConfig& config) {
  return dps_guidance(y, x_tau, model.score(x_tau, tau, rates), model, tau, rates, config).field;
}

void reverse_step(TrajectoryState& state, const Field& score, const Field* guidance) {
  if (state.step_index <= 0) throw InvalidArgument("reverse_step: trajectory already finished");
  require_same_shape(state.x, score, "reverse_step");
  const double tau = state.grid.time_at_step(state.step_index);
  const double beta = state.grid.beta(tau);
  const double dt = state.grid.step_size();
  const double noise_scale = state.step_index > 1 ? std::sqrt(beta * dt) : 0.0;
  Field& x = state.x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += (0.5 * beta * x[i] + beta * score[i]) * dt;
    if (noise_scale > 0.0) x[i] += noise_scale * state.rng.normal();
  }
  if (guidance) x += *guidance;
  if (!x.all_finite()) {
    throw DivergenceError("reverse_step: non-finite state", state.step_index);
  }
  --state.step_index;
}

void reverse_step(TrajectoryState& state, const ScoreModel& model, const Field* guidance) {
  const double tau = state.grid.time_at_step(state.step_index);
  reverse_step(state, model.score(state.x, tau, rates_at(state.grid, tau)), guidance);
}

TrajectoryResult run_trajectory(TrajectoryState state, const ScoreModel& model,
                                const Observation* y, const GuidanceConfig& config) {
  TrajectoryResult out;
  out.steps = state.step_index;
  if (state.step_index == 0) {
    out.estimate = state.mean;
  }
  const bool exact = config.jacobian_mode == JacobianMode::exact_linearization ||
                     (config.jacobian_mode == JacobianMode::automatic &&
                      model.supports_exact_linearization());
  while (state.step_index > 0) {
    const double tau = state.grid.time_at_step(state.step_index);
    const Rates rates = rates_at(state.grid, tau);
    const Field score = model.score(state.x, tau, rates);
    ++out.score_evaluations;
    const bool last = state.step_index == 1;
    if (y) {
      GuidanceResult g = dps_guidance(*y, state.x, score, model, tau, rates, config);
      if (exact && g.residual_norm > 0.0) ++out.vjp_evaluations;
      if (last) {
        out.estimate = g.estimate;
        out.estimate += g.field;
      }
      reverse_step(state, score, &g.field);
    } else {
      if (last) out.estimate = tweedie_estimate(state.x, rates, score);
      reverse_step(state, score, nullptr);
    }
  }
  if (!out.estimate.all_finite()) throw DivergenceError("run_trajectory: non-finite estimate", 0);
  out.terminal = std::move(state.x);
  out.data_estimate = to_data_space(out.estimate, true);
  return out;
}

SequenceResult reconstruct_sequence(const std::vector<Observation>& observations,
                                    const ScoreModel& model, const TransitionModel* transition,
                                    const NoiseSchedule& schedule, const SequenceOptions& options) {
  if (observations.empty()) throw InvalidArgument("reconstruct_sequence: no observations");
  if (options.variant == InitVariant::seqdiff_plus && !transition) {
    throw InvalidArgument("reconstruct_sequence: seqdiff+ needs a transition model");
  }
  if (options.context == 0) throw InvalidArgument("reconstruct_sequence: context must be positive");
  const auto& first = observations.front().op;
  if (!first) throw InvalidArgument("reconstruct_sequence: observation without operator");
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const auto& op = observations[t].op;
    if (!op || op->height() != first->height() || op->width() != first->width()) {
      throw ShapeMismatch("reconstruct_sequence: operator shape changes at frame " +
                          std::to_string(t));
    }
    if (t > 0 && observations[t].frame_index <= observations[t - 1].frame_index) {
      throw InvalidArgument("reconstruct_sequence: observations must be ordered by frame index");
    }
  }

  SequenceResult out;
  HistoryBuffer history(options.context);
  std::optional<Field> previous;
  for (const Observation& obs : observations) {
    const auto start = std::chrono::steady_clock::now();
    InitStrategy s;
    s.variant = options.variant;
    s.tau_prime = options.tau_prime;
    s.steps = options.steps;
    s.height = first->height();
    s.width = first->width();
    s.observation = &obs;
    s.previous_estimate = previous ? &*previous : nullptr;
    s.transition = transition;
    s.history = &history;
    const std::uint64_t seed =
        derive_seed(options.seed, {options.sequence_id, static_cast<std::uint64_t>(obs.frame_index)});
    TrajectoryState state;
    try {
      state = make_init(s, schedule, seed);
    } catch (const MissingContext&) {
      InitStrategy fallback;
      fallback.variant = InitVariant::vanilla;
      fallback.height = s.height;
      fallback.width = s.width;
      state = make_init(fallback, schedule, seed);
      s.variant = InitVariant::vanilla;
    }
    FrameReport report;
    report.frame_index = obs.frame_index;
    report.variant_used = s.variant;
    report.n_prime = state.step_index;
    TrajectoryResult r = run_trajectory(std::move(state), model, &obs, options.guidance);
    report.score_evaluations = r.score_evaluations;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Field model_space = to_model_space(r.data_estimate);
    history.push(model_space, obs.frame_index);
    previous = std::move(model_space);
    out.estimates.push_back(std::move(r.data_estimate));
    out.model_estimates.push_back(std::move(r.estimate));
    out.frames.push_back(report);
  }
  return out;
}

}  // namespace seqdiff
