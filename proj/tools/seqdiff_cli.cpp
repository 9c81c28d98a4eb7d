// seqdiff command-line front end.
//
//   seqdiff gen              --config c.json --out data/
//   seqdiff train-score      --config c.json --out models/
//   seqdiff train-transition --config c.json --out models/ [--score models/score.sdmc]
//   seqdiff run   --input seq.seqf --strategy seqdiff --n-prime 4 --out run/
//   seqdiff sweep --config c.json --out sweep/
//   seqdiff plot  --csv sweep/runs.csv --kind psnr-vs-steps --out sweep/
//
// Exit codes: 0 ok, 1 usage, 2 data/checkpoint, 3 numerical divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "seqdiff/binary_io.hpp"
#include "seqdiff/checkpoint.hpp"
#include "seqdiff/config.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/measurement.hpp"
#include "seqdiff/metrics.hpp"
#include "seqdiff/plot.hpp"
#include "seqdiff/report.hpp"
#include "seqdiff/sampler.hpp"
#include "seqdiff/sequence.hpp"
#include "seqdiff/sweep.hpp"
#include "seqdiff/transition.hpp"

namespace fs = std::filesystem;
using namespace seqdiff;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_experiment_config("{}") : load_experiment_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.finalize();
  }
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
  return p;
}

void write_losses(const fs::path& path, const std::vector<double>& losses) {
  std::string text = "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    text += std::to_string(i) + ',' + format_fixed(losses[i], 6) + '\n';
  }
  binary::write_file(path.string(), text);
}

fs::path resolve(const std::string& given, const fs::path& fallback_dir, const std::string& fallback) {
  if (!given.empty()) return given;
  return fallback_dir / fallback;
}

int cmd_gen(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = out_dir(c);
  const auto sequences = generate_dataset(cfg.data);
  std::size_t index = 0;
  for (const Sequence& s : sequences) {
    char name[64];
    std::snprintf(name, sizeof(name), "seq_%04zu.seqf", index++);
    save_sequence(s.frames, dir / name);
  }
  if (!sequences.empty()) export_pgm(sequences.front().frames.front(), dir / "preview.pgm");
  std::cout << "wrote " << sequences.size() << " sequences to " << dir.string() << "\n";
  return 0;
}

int cmd_train_score(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = out_dir(c);
  const auto frames = model_space_frames(generate_dataset(cfg.data));
  DenoiserNet<float> net(cfg.score.arch, derive_seed(cfg.seed, {0xde}));
  const auto trace = train_score(net, frames, cfg.score.train, cfg.schedule.make());
  write_checkpoint(dir / "score.sdmc", denoiser_checkpoint(net));
  write_losses(dir / "score_loss.csv", trace.losses);
  std::cout << "trained denoiser on " << frames.size() << " frames, final loss "
            << (trace.losses.empty() ? 0.0 : trace.losses.back()) << "\n";
  return 0;
}

int cmd_train_transition(const Common& c, const std::string& score_path) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = out_dir(c);
  const auto sequences = model_space_sequences(generate_dataset(cfg.data));
  TubeletAttention<float> model(cfg.transition.arch, derive_seed(cfg.seed, {0x7f}));
  auto trace = train_transition(model, sequences, cfg.transition.train);
  if (cfg.transition.finetune.iterations > 0) {
    auto net = std::make_shared<DenoiserNet<float>>(
        denoiser_from_checkpoint(read_checkpoint(resolve(score_path, ".", cfg.score_checkpoint))));
    const NetworkScore score(net);
    DatasetConfig clean = cfg.data;
    clean.num_sequences = cfg.transition.finetune_num_sequences;
    clean.sequence.seed = derive_seed(cfg.seed, {0x7c});
    DatasetConfig posterior = clean;
    posterior.motion_levels = cfg.transition.finetune_motion_levels;
    posterior.sequence.seed = derive_seed(cfg.seed, {0x7d});
    HistoryConfig h;
    h.keep_fraction = cfg.sweep.keep_fraction;
    h.noise_std = cfg.sweep.noise_std;
    h.context = cfg.sweep.context;
    h.guidance = cfg.sweep.guidance;
    h.seed = derive_seed(cfg.seed, {0x7e});
    const auto tuned = fine_tune_transition(model, model_space_sequences(generate_dataset(clean)),
                                            model_space_sequences(generate_dataset(posterior)), score,
                                            cfg.schedule.make(), h, cfg.transition.finetune);
    trace.losses.insert(trace.losses.end(), tuned.losses.begin(), tuned.losses.end());
  }
  write_checkpoint(dir / "transition.sdmc", transition_checkpoint(model));
  write_losses(dir / "transition_loss.csv", trace.losses);
  std::cout << "trained transition model, final loss "
            << (trace.losses.empty() ? 0.0 : trace.losses.back()) << "\n";
  return 0;
}

struct RunArgs {
  std::string input;
  std::string strategy = "seqdiff";
  int n_prime = 4;
  std::string score;
  std::string transition;
};

int cmd_run(const Common& c, const RunArgs& a) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = out_dir(c);
  const NoiseSchedule schedule = cfg.schedule.make();
  const std::vector<Field> frames = load_sequence(a.input);
  const InitVariant variant = parse_variant(a.strategy);
  if (a.n_prime < 1 || a.n_prime > schedule.steps()) throw InvalidArgument("--n-prime outside [1, N]");

  auto net = std::make_shared<DenoiserNet<float>>(
      denoiser_from_checkpoint(read_checkpoint(resolve(a.score, ".", cfg.score_checkpoint))));
  const NetworkScore score(net);
  std::optional<TubeletAttention<float>> transition;
  if (variant == InitVariant::seqdiff_plus) {
    transition.emplace(transition_from_checkpoint(
        read_checkpoint(resolve(a.transition, ".", cfg.transition_checkpoint))));
  }

  const SweepConfig& sc = cfg.sweep;
  std::vector<Observation> observations;
  std::vector<std::uint64_t> mask_ids;
  std::string masks;
  std::shared_ptr<const LinearOperator> op;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!op || sc.mask_mode == MaskMode::per_frame) {
      op = std::make_shared<LinearOperator>(make_column_mask(
          frames[t].height(), frames[t].width(), sc.keep_fraction, derive_seed(cfg.seed, {2, t}), sc.noise_std));
      masks += format_mask_line(*op) + '\n';
    }
    mask_ids.push_back(static_cast<std::uint64_t>(std::count(masks.begin(), masks.end(), '\n') - 1));
    observations.push_back(observe(op, to_model_space(frames[t]), derive_seed(cfg.seed, {3, t}),
                                   static_cast<int>(t)));
  }
  SequenceOptions o;
  o.variant = variant;
  o.steps = a.n_prime;
  o.tau_prime = schedule.time_at_step(a.n_prime);
  o.context = sc.context;
  o.guidance = sc.guidance;
  o.seed = cfg.seed;
  const auto result = reconstruct_sequence(observations, score, transition ? &*transition : nullptr,
                                           schedule, o);

  const auto frame_motion = motion(frames);
  std::vector<RunRow> rows;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    RunRow r;
    r.frame = static_cast<int>(t);
    r.strategy = variant_name(variant);
    r.n_prime = a.n_prime;
    r.psnr_db = psnr(result.estimates[t], frames[t]);
    r.motion = frame_motion[t];
    r.wall_s = sc.record_timing ? result.frames[t].wall_seconds : 0.0;
    r.seed = cfg.seed;
    r.mask_id = mask_ids[t];
    rows.push_back(r);
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%03zu.pgm", t);
    export_pgm(result.estimates[t], dir / name);
  }
  binary::write_file((dir / "runs.csv").string(), format_run_csv(rows));
  binary::write_file((dir / "masks.txt").string(), masks);
  save_sequence(result.estimates, dir / "reconstruction.seqf");
  double total = 0.0;
  for (const RunRow& r : rows) total += r.psnr_db;
  std::cout << "mean PSNR " << format_fixed(total / static_cast<double>(rows.size()), 2) << " dB over "
            << rows.size() << " frames\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& score_path, const std::string& transition_path) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = out_dir(c);
  auto net = std::make_shared<DenoiserNet<float>>(
      denoiser_from_checkpoint(read_checkpoint(resolve(score_path, ".", cfg.score_checkpoint))));
  const NetworkScore score(net);
  std::optional<TubeletAttention<float>> transition;
  for (InitVariant v : cfg.sweep.strategies) {
    if (v == InitVariant::seqdiff_plus && !transition) {
      transition.emplace(transition_from_checkpoint(
          read_checkpoint(resolve(transition_path, ".", cfg.transition_checkpoint))));
    }
  }
  const SweepResult result =
      run_sweep(cfg.sweep, score, transition ? &*transition : nullptr, cfg.schedule.make());
  write_sweep_outputs(result, dir);
  std::cout << format_step_summary_csv(result.psnr_vs_steps);
  return 0;
}

int cmd_plot(const Common& c, const std::string& csv, const std::string& kind, int n_prime) {
  const fs::path dir = out_dir(c);
  const PlotKind k = parse_plot_kind(kind);
  emit_plot(csv, k, dir / (plot_kind_name(k) + ".svg"), n_prime);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep large training buffers in the heap instead of mmap/munmap per batch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Sequential diffusion posterior sampling"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Master seed (overrides the config)");
    sub->add_option("--out", common.out, "Output directory");
  };
  auto* gen = app.add_subcommand("gen", "Write synthetic SEQF sequences");
  auto* train_score_cmd = app.add_subcommand("train-score", "Train the denoiser");
  auto* train_transition_cmd = app.add_subcommand("train-transition", "Train the next-frame predictor");
  auto* run = app.add_subcommand("run", "Reconstruct one SEQF sequence");
  auto* sweep = app.add_subcommand("sweep", "Run the strategy / N' / motion sweep");
  auto* plot = app.add_subcommand("plot", "Render an SVG from a run CSV");
  for (auto* sub : {gen, train_score_cmd, train_transition_cmd, run, sweep, plot}) add_common(sub);

  std::string transition_score;
  train_transition_cmd->add_option("--score", transition_score, "Denoiser checkpoint for fine-tuning");

  RunArgs run_args;
  run->add_option("--input", run_args.input, "SEQF sequence")->required()->check(CLI::ExistingFile);
  run->add_option("--strategy", run_args.strategy, "vanilla, ccdf, seqdiff or seqdiffplus");
  run->add_option("--n-prime", run_args.n_prime, "Diffusion steps per frame");
  run->add_option("--score", run_args.score, "Denoiser checkpoint");
  run->add_option("--transition", run_args.transition, "Transition checkpoint");

  std::string sweep_score, sweep_transition;
  sweep->add_option("--score", sweep_score, "Denoiser checkpoint");
  sweep->add_option("--transition", sweep_transition, "Transition checkpoint");

  std::string plot_csv, plot_kind = "psnr-vs-steps";
  int plot_n_prime = 4;
  plot->add_option("--csv", plot_csv, "Run CSV")->required();
  plot->add_option("--kind", plot_kind, "psnr-vs-steps, psnr-vs-motion or best-step-vs-motion");
  plot->add_option("--n-prime", plot_n_prime, "N' used by psnr-vs-motion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*train_score_cmd) return cmd_train_score(common);
    if (*train_transition_cmd) return cmd_train_transition(common, transition_score);
    if (*run) return cmd_run(common, run_args);
    if (*sweep) return cmd_sweep(common, sweep_score, sweep_transition);
    if (*plot) return cmd_plot(common, plot_csv, plot_kind, plot_n_prime);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
