#include "seqdiff/config.hpp"

#include <initializer_list>
#include <set>

#include <json.hpp>

#include "seqdiff/binary_io.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument(std::string("config: '") + section + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) {
      throw InvalidArgument(std::string("config: unknown key '") + item.key() + "' in '" + section + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void read_size(const json& j, const char* key, std::size_t& out) {
  long long v = static_cast<long long>(out);
  read(j, key, v);
  if (v < 0) throw InvalidArgument(std::string("config: '") + key + "' must be nonnegative");
  out = static_cast<std::size_t>(v);
}

}  // namespace

std::string sequence_kind_name(SequenceKind kind) {
  return kind == SequenceKind::ar1_gaussian ? "ar1-gaussian" : "moving-blobs";
}

SequenceKind parse_sequence_kind(const std::string& name) {
  if (name == "ar1-gaussian") return SequenceKind::ar1_gaussian;
  if (name == "moving-blobs") return SequenceKind::moving_blobs;
  throw InvalidArgument("unknown sequence kind '" + name + "'");
}

std::vector<Sequence> generate_dataset(const DatasetConfig& config) {
  if (config.num_sequences < 0) throw InvalidArgument("dataset: num_sequences must be nonnegative");
  std::vector<Sequence> out;
  for (std::size_t level = 0; level < config.motion_levels.size(); ++level) {
    for (int s = 0; s < config.num_sequences; ++s) {
      SequenceConfig c = config.sequence;
      c.motion_level = config.motion_levels[level];
      c.seed = derive_seed(config.sequence.seed, {level, static_cast<std::uint64_t>(s)});
      out.push_back(generate(c));
    }
  }
  return out;
}

std::vector<Field> model_space_frames(const std::vector<Sequence>& sequences) {
  std::vector<Field> out;
  for (const Sequence& s : sequences) {
    for (const Field& f : s.frames) out.push_back(to_model_space(f));
  }
  return out;
}

std::vector<std::vector<Field>> model_space_sequences(const std::vector<Sequence>& sequences) {
  std::vector<std::vector<Field>> out;
  for (const Sequence& s : sequences) {
    std::vector<Field> frames;
    for (const Field& f : s.frames) frames.push_back(to_model_space(f));
    out.push_back(std::move(frames));
  }
  return out;
}

void ExperimentConfig::finalize() {
  data.sequence.seed = seed;
  score.train.seed = derive_seed(seed, {0x5c});
  transition.train.seed = derive_seed(seed, {0x7a});
  transition.finetune.seed = derive_seed(seed, {0x7b});
  sweep.master_seed = seed;
  sweep.data.kind = data.sequence.kind;
  sweep.data.height = data.sequence.height;
  sweep.data.width = data.sequence.width;
  sweep.data.num_blobs = data.sequence.num_blobs;
  sweep.data.rho = data.sequence.rho;
  transition.arch.frame_height = static_cast<int>(data.sequence.height);
  transition.arch.frame_width = static_cast<int>(data.sequence.width);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), e.byte);
  }
  ExperimentConfig c;
  check_keys(root, "root",
             {"seed", "schedule", "data", "score", "transition", "sweep", "score_checkpoint",
              "transition_checkpoint"});
  read(root, "seed", c.seed);
  read(root, "score_checkpoint", c.score_checkpoint);
  read(root, "transition_checkpoint", c.transition_checkpoint);

  if (root.contains("schedule")) {
    const json& j = root["schedule"];
    check_keys(j, "schedule", {"beta_min", "beta_max", "horizon", "steps"});
    read(j, "beta_min", c.schedule.beta_min);
    read(j, "beta_max", c.schedule.beta_max);
    read(j, "horizon", c.schedule.horizon);
    read(j, "steps", c.schedule.steps);
  }
  if (root.contains("data")) {
    const json& j = root["data"];
    check_keys(j, "data",
               {"kind", "height", "width", "length", "rho", "motion_level", "num_blobs",
                "motion_levels", "num_sequences"});
    std::string kind = sequence_kind_name(c.data.sequence.kind);
    read(j, "kind", kind);
    c.data.sequence.kind = parse_sequence_kind(kind);
    read_size(j, "height", c.data.sequence.height);
    read_size(j, "width", c.data.sequence.width);
    read_size(j, "length", c.data.sequence.length);
    read(j, "rho", c.data.sequence.rho);
    read(j, "motion_level", c.data.sequence.motion_level);
    read(j, "num_blobs", c.data.sequence.num_blobs);
    read(j, "motion_levels", c.data.motion_levels);
    read(j, "num_sequences", c.data.num_sequences);
  }
  if (root.contains("score")) {
    const json& j = root["score"];
    check_keys(j, "score",
               {"channels", "stages", "time_frequencies", "learning_rate", "batch_size", "iterations"});
    read(j, "channels", c.score.arch.channels);
    read(j, "stages", c.score.arch.stages);
    read(j, "time_frequencies", c.score.arch.time_frequencies);
    read(j, "learning_rate", c.score.train.learning_rate);
    read(j, "batch_size", c.score.train.batch_size);
    read(j, "iterations", c.score.train.iterations);
  }
  if (root.contains("transition")) {
    const json& j = root["transition"];
    check_keys(j, "transition",
               {"context", "tubelet", "embed_dim", "num_layers", "num_heads", "mlp_dim",
                "learning_rate", "batch_size", "iterations", "cosine_decay", "finetune_iterations",
                "finetune_learning_rate", "finetune_motion_levels", "finetune_num_sequences"});
    TubeletConfig& a = c.transition.arch;
    read(j, "context", a.context);
    if (j.contains("tubelet")) {
      std::vector<int> t;
      read(j, "tubelet", t);
      if (t.size() != 3) throw InvalidArgument("config: 'tubelet' must have three entries");
      a.tubelet_time = t[0];
      a.tubelet_height = t[1];
      a.tubelet_width = t[2];
    }
    read(j, "embed_dim", a.embed_dim);
    read(j, "num_layers", a.num_layers);
    read(j, "num_heads", a.num_heads);
    read(j, "mlp_dim", a.mlp_dim);
    read(j, "learning_rate", c.transition.train.learning_rate);
    read(j, "batch_size", c.transition.train.batch_size);
    read(j, "iterations", c.transition.train.iterations);
    read(j, "cosine_decay", c.transition.train.cosine_decay);
    read(j, "finetune_iterations", c.transition.finetune.iterations);
    read(j, "finetune_learning_rate", c.transition.finetune.learning_rate);
    read(j, "finetune_motion_levels", c.transition.finetune_motion_levels);
    read(j, "finetune_num_sequences", c.transition.finetune_num_sequences);
  }
  if (root.contains("sweep")) {
    const json& j = root["sweep"];
    check_keys(j, "sweep",
               {"strategies", "n_prime_grid", "motion_levels", "splits", "num_sequences", "length",
                "keep_fraction", "noise_std", "mask_mode", "context", "zeta_scale", "normalization",
                "jacobian_mode", "record_timing"});
    SweepConfig& s = c.sweep;
    if (j.contains("strategies")) {
      std::vector<std::string> names;
      read(j, "strategies", names);
      s.strategies.clear();
      for (const auto& n : names) s.strategies.push_back(parse_variant(n));
    }
    read(j, "n_prime_grid", s.n_prime_grid);
    read(j, "motion_levels", s.motion_levels);
    read(j, "splits", s.splits);
    read(j, "num_sequences", s.num_sequences);
    read_size(j, "length", s.data.length);
    read(j, "keep_fraction", s.keep_fraction);
    read(j, "noise_std", s.noise_std);
    std::string mode = mask_mode_name(s.mask_mode);
    read(j, "mask_mode", mode);
    s.mask_mode = parse_mask_mode(mode);
    read_size(j, "context", s.context);
    read(j, "zeta_scale", s.guidance.zeta_scale);
    if (j.contains("normalization")) {
      std::string n;
      read(j, "normalization", n);
      if (n == "residual-norm") s.guidance.normalization = GuidanceNormalization::residual_norm;
      else if (n == "none") s.guidance.normalization = GuidanceNormalization::none;
      else throw InvalidArgument("config: unknown normalization '" + n + "'");
    }
    if (j.contains("jacobian_mode")) {
      std::string m;
      read(j, "jacobian_mode", m);
      if (m == "automatic") s.guidance.jacobian_mode = JacobianMode::automatic;
      else if (m == "exact-linearization") s.guidance.jacobian_mode = JacobianMode::exact_linearization;
      else if (m == "identity-approximation") s.guidance.jacobian_mode = JacobianMode::identity_approximation;
      else throw InvalidArgument("config: unknown jacobian_mode '" + m + "'");
    }
    read(j, "record_timing", s.record_timing);
  }
  c.finalize();
  c.schedule.make();
  c.data.sequence.validate();
  c.transition.arch.validate();
  if (c.transition.finetune.iterations > 0 &&
      (c.transition.finetune_num_sequences < 1 || c.transition.finetune_motion_levels.empty())) {
    throw InvalidArgument("config: fine-tuning needs motion levels and num_sequences >= 1");
  }
  c.sweep.validate(c.schedule.make());
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(binary::read_file(path.string()));
}

}  // namespace seqdiff
