#include "seqdiff/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <tuple>

#include "seqdiff/binary_io.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/measurement.hpp"
#include "seqdiff/metrics.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

// Stream tags mixed into derive_seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kSamplerStream = 4;

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::string mask_mode_name(MaskMode mode) {
  return mode == MaskMode::per_sequence ? "per_sequence" : "per_frame";
}

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "per_sequence") return MaskMode::per_sequence;
  if (name == "per_frame") return MaskMode::per_frame;
  throw InvalidArgument("unknown mask mode '" + name + "'");
}

void SweepConfig::validate(const NoiseSchedule& schedule) const {
  if (strategies.empty()) throw InvalidArgument("sweep: no strategies");
  if (n_prime_grid.empty()) throw InvalidArgument("sweep: empty N' grid");
  if (motion_levels.empty()) throw InvalidArgument("sweep: no motion levels");
  for (int n : n_prime_grid) {
    if (n < 1 || n > schedule.steps()) {
      throw InvalidArgument("sweep: N' = " + std::to_string(n) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
    }
  }
  for (double m : motion_levels) {
    if (!(m >= 0.0)) throw InvalidArgument("sweep: motion levels must be nonnegative");
  }
  if (splits < 1 || num_sequences < 1) throw InvalidArgument("sweep: splits and num_sequences must be positive");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InvalidArgument("sweep: keep_fraction must lie in (0, 1]");
  if (!(noise_std >= 0.0)) throw InvalidArgument("sweep: noise_std must be nonnegative");
  if (context < 1) throw InvalidArgument("sweep: context must be positive");
  seqdiff::validate(guidance);
  data.validate();
}

std::uint64_t sweep_sequence_id(const SweepConfig& config, int split, int level, int s) {
  const auto levels = static_cast<std::uint64_t>(config.motion_levels.size());
  return (static_cast<std::uint64_t>(split) * levels + static_cast<std::uint64_t>(level)) *
             static_cast<std::uint64_t>(config.num_sequences) +
         static_cast<std::uint64_t>(s);
}

int sweep_split_of(const SweepConfig& config, std::uint64_t sequence_id) {
  const auto per_split =
      static_cast<std::uint64_t>(config.motion_levels.size()) * static_cast<std::uint64_t>(config.num_sequences);
  return static_cast<int>(sequence_id / per_split);
}

SweepResult run_sweep(const SweepConfig& config, const ScoreModel& model,
                      const TransitionModel* transition, const NoiseSchedule& schedule) {
  config.validate(schedule);
  const bool wants_plus = std::find(config.strategies.begin(), config.strategies.end(),
                                    InitVariant::seqdiff_plus) != config.strategies.end();
  if (wants_plus && !transition) throw InvalidArgument("sweep: seqdiffplus requires a transition model");

  SweepResult result;
  std::vector<int> split_of_row;
  const std::size_t H = config.data.height, W = config.data.width;
  for (int split = 0; split < config.splits; ++split) {
    for (int level = 0; level < static_cast<int>(config.motion_levels.size()); ++level) {
      for (int s = 0; s < config.num_sequences; ++s) {
        const auto su = static_cast<std::uint64_t>(split);
        const auto lu = static_cast<std::uint64_t>(level);
        const auto sq = static_cast<std::uint64_t>(s);
        const std::uint64_t id = sweep_sequence_id(config, split, level, s);
        SequenceConfig dc = config.data;
        dc.motion_level = config.motion_levels[static_cast<std::size_t>(level)];
        dc.seed = derive_seed(config.master_seed, {kDataStream, su, lu, sq});
        const Sequence seq = generate(dc);
        const std::vector<double> frame_motion = motion(seq.frames);

        std::vector<Observation> observations;
        std::vector<std::uint64_t> mask_ids;
        std::shared_ptr<const LinearOperator> op;
        for (std::size_t t = 0; t < seq.frames.size(); ++t) {
          const auto tu = static_cast<std::uint64_t>(t);
          if (!op || config.mask_mode == MaskMode::per_frame) {
            const std::uint64_t mask_seed =
                derive_seed(config.master_seed, {kMaskStream, su, lu, sq, tu});
            op = std::make_shared<LinearOperator>(
                make_column_mask(H, W, config.keep_fraction, mask_seed, config.noise_std));
            result.mask_lines.push_back(format_mask_line(*op));
          }
          mask_ids.push_back(result.mask_lines.size() - 1);
          observations.push_back(observe(op, to_model_space(seq.frames[t]),
                                         derive_seed(config.master_seed, {kNoiseStream, su, lu, sq, tu}),
                                         static_cast<int>(t)));
        }

        for (InitVariant variant : config.strategies) {
          for (int n_prime : config.n_prime_grid) {
            SequenceOptions o;
            o.variant = variant;
            o.steps = n_prime;
            o.tau_prime = schedule.time_at_step(n_prime);
            o.context = config.context;
            o.guidance = config.guidance;
            o.seed = derive_seed(config.master_seed, {kSamplerStream, su});
            o.sequence_id = id;
            const SequenceResult r = reconstruct_sequence(
                observations, model, variant == InitVariant::seqdiff_plus ? transition : nullptr,
                schedule, o);
            for (std::size_t t = 0; t < seq.frames.size(); ++t) {
              RunRow row;
              row.sequence_id = id;
              row.frame = static_cast<int>(t);
              row.strategy = variant_name(variant);
              row.n_prime = n_prime;
              row.psnr_db = psnr(r.estimates[t], seq.frames[t]);
              row.motion = frame_motion[t];
              row.wall_s = config.record_timing ? r.frames[t].wall_seconds : 0.0;
              row.seed = o.seed;
              row.mask_id = mask_ids[t];
              result.rows.push_back(std::move(row));
              result.score_evaluations.push_back(r.frames[t].score_evaluations);
              split_of_row.push_back(split);
            }
          }
        }
      }
    }
  }

  // Canonical order, carrying the per-row diagnostics along.
  std::vector<std::size_t> order(result.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const RunRow& x = result.rows[a];
    const RunRow& y = result.rows[b];
    return std::tie(x.sequence_id, x.frame, x.strategy, x.n_prime) <
           std::tie(y.sequence_id, y.frame, y.strategy, y.n_prime);
  });
  std::vector<RunRow> rows;
  std::vector<int> evals, splits;
  for (std::size_t i : order) {
    rows.push_back(result.rows[i]);
    evals.push_back(result.score_evaluations[i]);
    splits.push_back(split_of_row[i]);
  }
  result.rows = std::move(rows);
  result.score_evaluations = std::move(evals);
  result.psnr_vs_steps = summarize_steps(result.rows, splits);
  result.best_step_vs_motion = best_step_by_motion(result.rows);
  return result;
}

std::vector<StepSummary> summarize_steps(const std::vector<RunRow>& rows,
                                         const std::vector<int>& split_of_row) {
  if (rows.size() != split_of_row.size()) throw ShapeMismatch("summarize_steps: split labels do not match rows");
  std::map<std::pair<std::string, int>, std::map<int, std::vector<double>>> cells;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].frame < 1) continue;
    cells[{rows[i].strategy, rows[i].n_prime}][split_of_row[i]].push_back(rows[i].psnr_db);
  }
  std::vector<StepSummary> out;
  for (const auto& [key, by_split] : cells) {
    std::vector<double> means;
    for (const auto& [split, values] : by_split) means.push_back(mean_of(values));
    StepSummary s;
    s.strategy = key.first;
    s.n_prime = key.second;
    s.mean_psnr_db = mean_of(means);
    double var = 0.0;
    for (double m : means) var += (m - s.mean_psnr_db) * (m - s.mean_psnr_db);
    s.std_psnr_db = means.size() > 1 ? std::sqrt(var / static_cast<double>(means.size() - 1)) : 0.0;
    s.min_split_db = *std::min_element(means.begin(), means.end());
    s.max_split_db = *std::max_element(means.begin(), means.end());
    s.splits = static_cast<int>(means.size());
    out.push_back(s);
  }
  return out;
}

std::vector<BestStepRow> best_step_by_motion(const std::vector<RunRow>& rows, int bins) {
  if (bins < 1) throw InvalidArgument("best_step_by_motion: bins must be positive");
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const RunRow& r : rows) {
    if (r.frame < 1) continue;
    if (!any) lo = hi = r.motion;
    lo = std::min(lo, r.motion);
    hi = std::max(hi, r.motion);
    any = true;
  }
  if (!any) return {};
  const double width = (hi - lo) / bins;
  auto bin_of = [&](double m) {
    if (width <= 0.0) return 0;
    return std::min(bins - 1, static_cast<int>(std::floor((m - lo) / width)));
  };
  std::map<std::tuple<int, std::string, int>, std::vector<double>> cells;
  for (const RunRow& r : rows) {
    if (r.frame < 1) continue;
    cells[{bin_of(r.motion), r.strategy, r.n_prime}].push_back(r.psnr_db);
  }
  std::vector<BestStepRow> out;
  for (const auto& [key, values] : cells) {
    const auto& [bin, strategy, n_prime] = key;
    const double m = mean_of(values);
    if (!out.empty() && out.back().bin == bin && out.back().strategy == strategy) {
      if (m > out.back().best_psnr_db) {
        out.back().best_n_prime = n_prime;
        out.back().best_psnr_db = m;
        out.back().frames = static_cast<int>(values.size());
      }
      continue;
    }
    BestStepRow b;
    b.bin = bin;
    b.motion_lo = lo + width * bin;
    b.motion_hi = width > 0.0 ? lo + width * (bin + 1) : hi;
    b.strategy = strategy;
    b.best_n_prime = n_prime;
    b.best_psnr_db = m;
    b.frames = static_cast<int>(values.size());
    out.push_back(b);
  }
  return out;
}

std::string format_step_summary_csv(const std::vector<StepSummary>& rows) {
  std::string out = "strategy,n_prime,mean_psnr_db,std_psnr_db,min_split_db,max_split_db,splits\n";
  for (const StepSummary& s : rows) {
    out += s.strategy + ',' + std::to_string(s.n_prime) + ',' + format_fixed(s.mean_psnr_db, 4) + ',' +
           format_fixed(s.std_psnr_db, 4) + ',' + format_fixed(s.min_split_db, 4) + ',' +
           format_fixed(s.max_split_db, 4) + ',' + std::to_string(s.splits) + '\n';
  }
  return out;
}

std::string format_best_step_csv(const std::vector<BestStepRow>& rows) {
  std::string out = "bin,motion_lo,motion_hi,strategy,best_n_prime,best_psnr_db,frames\n";
  for (const BestStepRow& b : rows) {
    out += std::to_string(b.bin) + ',' + format_fixed(b.motion_lo, 6) + ',' + format_fixed(b.motion_hi, 6) +
           ',' + b.strategy + ',' + std::to_string(b.best_n_prime) + ',' + format_fixed(b.best_psnr_db, 4) +
           ',' + std::to_string(b.frames) + '\n';
  }
  return out;
}

std::vector<std::vector<Field>> posterior_histories(const std::vector<std::vector<Field>>& sequences,
                                                    const ScoreModel& model,
                                                    const TransitionModel* transition,
                                                    const NoiseSchedule& schedule,
                                                    const HistoryConfig& config) {
  if (config.steps < 1 || config.steps > schedule.steps()) throw InvalidArgument("histories: steps outside [1, N]");
  std::vector<std::vector<Field>> out;
  out.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const std::vector<Field>& seq = sequences[s];
    if (seq.empty()) throw InvalidArgument("histories: empty sequence");
    const auto sq = static_cast<std::uint64_t>(s);
    auto op = std::make_shared<const LinearOperator>(
        make_column_mask(seq.front().height(), seq.front().width(), config.keep_fraction,
                         derive_seed(config.seed, {kMaskStream, sq}), config.noise_std));
    std::vector<Observation> observations;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      observations.push_back(observe(op, seq[t], derive_seed(config.seed, {kNoiseStream, sq, t}),
                                     static_cast<int>(t)));
    }
    SequenceOptions o;
    o.variant = config.variant;
    o.steps = config.steps;
    o.tau_prime = schedule.time_at_step(config.steps);
    o.context = config.context;
    o.guidance = config.guidance;
    o.seed = derive_seed(config.seed, {kSamplerStream, sq});
    o.sequence_id = s;
    const SequenceResult r = reconstruct_sequence(
        observations, model, config.variant == InitVariant::seqdiff_plus ? transition : nullptr,
        schedule, o);
    std::vector<Field> estimates;
    estimates.reserve(r.estimates.size());
    for (const Field& e : r.estimates) estimates.push_back(to_model_space(e));
    out.push_back(std::move(estimates));
  }
  return out;
}

TransitionTrace fine_tune_transition(TubeletAttention<float>& model,
                                     const std::vector<std::vector<Field>>& clean,
                                     const std::vector<std::vector<Field>>& posterior,
                                     const ScoreModel& score, const NoiseSchedule& schedule,
                                     const HistoryConfig& history, const TrainConfig& train) {
  std::vector<std::vector<Field>> inputs = clean;
  std::vector<std::vector<Field>> targets = clean;
  auto estimates = posterior_histories(posterior, score, &model, schedule, history);
  for (std::size_t s = 0; s < posterior.size(); ++s) {
    inputs.push_back(std::move(estimates[s]));
    targets.push_back(posterior[s]);
  }
  return train_transition(model, std::span<const std::vector<Field>>(inputs),
                          std::span<const std::vector<Field>>(targets), train);
}

void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string masks;
  for (const std::string& line : result.mask_lines) masks += line + '\n';
  binary::write_file((dir / "runs.csv").string(), format_run_csv(result.rows));
  binary::write_file((dir / "masks.txt").string(), masks);
  binary::write_file((dir / "psnr_vs_steps.csv").string(), format_step_summary_csv(result.psnr_vs_steps));
  binary::write_file((dir / "best_step_vs_motion.csv").string(),
                     format_best_step_csv(result.best_step_vs_motion));
}

}  // namespace seqdiff
