#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/denoiser.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/nn.hpp"
#include "seqdiff/sequence.hpp"
#include "seqdiff/sweep.hpp"
#include "seqdiff/transition.hpp"

namespace seqdiff {

struct ScheduleConfig {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;
  int steps = 100;

  NoiseSchedule make() const { return make_schedule(beta_min, beta_max, horizon, steps); }
};

/// Training corpus: `num_sequences` sequences per motion level.
struct DatasetConfig {
  SequenceConfig sequence;
  std::vector<double> motion_levels = {0.0, 1.0, 2.0, 3.0, 4.0};
  int num_sequences = 40;
};

/// Sequences for every (motion level, index), seeded from sequence.seed.
std::vector<Sequence> generate_dataset(const DatasetConfig& config);

/// Model-space frames of every sequence, in order.
std::vector<Field> model_space_frames(const std::vector<Sequence>& sequences);
std::vector<std::vector<Field>> model_space_sequences(const std::vector<Sequence>& sequences);

struct ScoreTrainingConfig {
  DenoiserArch arch;
  TrainConfig train{2e-3, 16, 3000, 0};
};

struct TransitionTrainingConfig {
  TubeletConfig arch;
  TrainConfig train{1e-3, 8, 1500, 0};
  /// Optional pass on the model's own posterior histories; off at 0 iterations.
  TrainConfig finetune{5e-4, 8, 0, 0, true};
  std::vector<double> finetune_motion_levels = {0.5, 1.0, 2.0, 3.0, 4.0, 5.0};
  int finetune_num_sequences = 40;  // per level, for both the clean and the posterior part
};

/// Everything a CLI invocation can be configured with. Every section and
/// key is optional; unknown keys are rejected.
///
///   { "seed": 0,
///     "schedule":   { "beta_min", "beta_max", "horizon", "steps" },
///     "data":       { "kind", "height", "width", "length", "rho", "motion_level",
///                     "num_blobs", "motion_levels", "num_sequences" },
///     "score":      { "channels", "stages", "time_frequencies",
///                     "learning_rate", "batch_size", "iterations" },
///     "transition": { "context", "tubelet", "embed_dim", "num_layers", "num_heads",
///                     "mlp_dim", "learning_rate", "batch_size", "iterations",
///                     "cosine_decay", "finetune_iterations", "finetune_learning_rate",
///                     "finetune_motion_levels", "finetune_num_sequences" },
///     "sweep":      { "strategies", "n_prime_grid", "motion_levels", "splits",
///                     "num_sequences", "length", "keep_fraction", "noise_std",
///                     "mask_mode", "context", "zeta_scale", "normalization",
///                     "jacobian_mode", "record_timing" },
///     "score_checkpoint": path, "transition_checkpoint": path }
struct ExperimentConfig {
  std::uint64_t seed = 0;
  ScheduleConfig schedule;
  DatasetConfig data;
  ScoreTrainingConfig score;
  TransitionTrainingConfig transition;
  SweepConfig sweep;
  std::string score_checkpoint = "score.sdmc";
  std::string transition_checkpoint = "transition.sdmc";

  /// Propagates the seed and frame shape into the dependent sections.
  void finalize();
};

/// Throws ParseError (byte offset) on malformed JSON and
/// InvalidArgument on unknown keys or out-of-range values.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::string sequence_kind_name(SequenceKind kind);
SequenceKind parse_sequence_kind(const std::string& name);

}  // namespace seqdiff
