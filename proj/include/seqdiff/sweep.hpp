#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/diffusion.hpp"
#include "seqdiff/report.hpp"
#include "seqdiff/sampler.hpp"
#include "seqdiff/score.hpp"
#include "seqdiff/sequence.hpp"
#include "seqdiff/transition.hpp"

namespace seqdiff {

/// per_sequence: one column mask per sequence. per_frame: a fresh mask for
/// every frame.
enum class MaskMode { per_sequence, per_frame };

std::string mask_mode_name(MaskMode mode);
MaskMode parse_mask_mode(const std::string& name);

struct SweepConfig {
  std::vector<InitVariant> strategies = {InitVariant::vanilla, InitVariant::ccdf,
                                         InitVariant::seqdiff, InitVariant::seqdiff_plus};
  std::vector<int> n_prime_grid = {1, 2, 4, 8, 16, 32, 100};
  std::vector<double> motion_levels = {0.5, 1.0, 2.0, 4.0};
  int splits = 3;
  int num_sequences = 10;  // per (split, motion level)
  std::uint64_t master_seed = 0;
  SequenceConfig data;  // motion_level and seed are set per sequence
  double keep_fraction = 0.2;
  double noise_std = 0.0;  // model-space measurement noise
  MaskMode mask_mode = MaskMode::per_sequence;
  std::size_t context = 4;
  GuidanceConfig guidance;
  /// When false, wall_s is written as 0 so the CSV is reproducible.
  bool record_timing = true;

  /// Throws InvalidArgument on empty grids, N' outside [1, N], or bad counts.
  void validate(const NoiseSchedule& schedule) const;
};

/// Mean PSNR of one (strategy, N') cell: per-split means over frames t >= 1,
/// then their mean and sample standard deviation.
struct StepSummary {
  std::string strategy;
  int n_prime = 0;
  double mean_psnr_db = 0.0;
  double std_psnr_db = 0.0;
  double min_split_db = 0.0;
  double max_split_db = 0.0;
  int splits = 0;
};

/// Best N' (highest mean PSNR, ties to the smaller N') per strategy and
/// motion bin, over frames t >= 1.
struct BestStepRow {
  int bin = 0;
  double motion_lo = 0.0;
  double motion_hi = 0.0;
  std::string strategy;
  int best_n_prime = 0;
  double best_psnr_db = 0.0;
  int frames = 0;
};

struct SweepResult {
  std::vector<RunRow> rows;  // canonical order
  std::vector<std::string> mask_lines;  // mask_id = index
  std::vector<StepSummary> psnr_vs_steps;
  std::vector<BestStepRow> best_step_vs_motion;
  /// Score evaluations spent on each row's frame, aligned with `rows`.
  std::vector<int> score_evaluations;
};

/// sequence_id = (split * motion_levels + level) * num_sequences + s.
std::uint64_t sweep_sequence_id(const SweepConfig& config, int split, int level, int s);
/// Split that produced `sequence_id`.
int sweep_split_of(const SweepConfig& config, std::uint64_t sequence_id);

/// Runs every (split, motion level, sequence, strategy, N') cell. Observations
/// and masks depend only on (master seed, split, level, sequence, frame) and
/// are shared across strategies and N'.
SweepResult run_sweep(const SweepConfig& config, const ScoreModel& model,
                      const TransitionModel* transition, const NoiseSchedule& schedule);

/// Aggregations shared by run_sweep and the plotter.
std::vector<StepSummary> summarize_steps(const std::vector<RunRow>& rows,
                                         const std::vector<int>& split_of_row);
/// Equal-width motion bins over the rows with frame >= 1.
std::vector<BestStepRow> best_step_by_motion(const std::vector<RunRow>& rows, int bins = 5);

std::string format_step_summary_csv(const std::vector<StepSummary>& rows);
std::string format_best_step_csv(const std::vector<BestStepRow>& rows);

/// How posterior-estimate histories are reconstructed for fine-tuning.
struct HistoryConfig {
  InitVariant variant = InitVariant::seqdiff_plus;
  int steps = 4;
  double keep_fraction = 0.2;
  double noise_std = 0.0;
  std::size_t context = 4;
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
};

/// Reconstructs each model-space sequence under its own column mask and
/// returns the clamped estimates in model space, the inputs a transition
/// model sees at inference.
std::vector<std::vector<Field>> posterior_histories(const std::vector<std::vector<Field>>& sequences,
                                                    const ScoreModel& model,
                                                    const TransitionModel* transition,
                                                    const NoiseSchedule& schedule,
                                                    const HistoryConfig& config);

/// One pass over clean windows of `clean` plus posterior-history windows of
/// `posterior`, all with clean next-frame targets. With the seqdiff_plus
/// variant the histories come from `model` itself, before the pass.
TransitionTrace fine_tune_transition(TubeletAttention<float>& model,
                                     const std::vector<std::vector<Field>>& clean,
                                     const std::vector<std::vector<Field>>& posterior,
                                     const ScoreModel& score, const NoiseSchedule& schedule,
                                     const HistoryConfig& history, const TrainConfig& train);

/// Writes runs.csv, masks.txt, psnr_vs_steps.csv and best_step_vs_motion.csv
/// into `dir` (created if needed).
void write_sweep_outputs(const SweepResult& result, const std::filesystem::path& dir);

}  // namespace seqdiff
