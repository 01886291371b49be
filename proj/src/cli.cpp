#include "mcatlas/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mcatlas/checkpoint.hpp"
#include "mcatlas/config.hpp"
#include "mcatlas/correspondence.hpp"
#include "mcatlas/dataset.hpp"
#include "mcatlas/errors.hpp"
#include "mcatlas/export.hpp"
#include "mcatlas/io.hpp"
#include "mcatlas/metrics.hpp"
#include "mcatlas/report.hpp"
#include "mcatlas/training.hpp"

namespace mca {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  fs::path out_dir = ".";
  int threads = 1;
};

struct SequenceArgs {
  std::string sequence;
  std::vector<std::string> inputs;
  std::string ids;
  std::string format = "auto";
  int obj_points = 0;
  bool no_unit_cube = false;

  void add_to(CLI::App* app) {
    app->add_option("--sequence", sequence, "Sequence manifest or directory");
    app->add_option("--inputs", inputs, "Ordered frame files (PLY, XYZ or OBJ)");
    app->add_option("--ids", ids, "Ground-truth id file (one line per frame)");
    app->add_option("--format", format, "Frame file format")->check(CLI::IsMember({"auto", "ply", "xyz", "obj"}));
    app->add_option("--obj-points", obj_points, "Points sampled per OBJ frame (0 keeps vertices)")
        ->check(CLI::NonNegativeNumber);
    app->add_flag("--no-unit-cube", no_unit_cube, "Keep input coordinates unscaled");
  }

  PointCloudSequence load(std::uint64_t seed, bool require_ids = false) const {
    if (sequence.empty() == inputs.empty()) throw UsageError("give exactly one of --sequence or --inputs");
    LoadOptions opt;
    opt.format = parse_file_format(format);
    opt.obj_points = obj_points;
    opt.unit_cube = !no_unit_cube;
    opt.seed = seed;
    opt.require_ids = require_ids;
    if (!ids.empty()) opt.ids_file = ids;
    if (!sequence.empty()) return load_manifest(sequence, opt);
    return load_sequence(std::vector<fs::path>(inputs.begin(), inputs.end()), opt);
  }
};

struct TrainArgs {
  std::string config;
  std::string preset = "full";
  std::optional<int> iterations, delta, batch_pairs, uv_samples, checkpoint_every;
  std::optional<double> alpha, lr;
  std::optional<std::string> strategy;
  int log_every = 100;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON file with TrainConfig fields");
    app->add_option("--preset", preset, "Base configuration before --config")->check(CLI::IsMember({"full", "desk"}));
    app->add_option("--iterations", iterations, "Override iterations")->check(CLI::NonNegativeNumber);
    app->add_option("--alpha", alpha, "Override alpha_mc")->check(CLI::NonNegativeNumber);
    app->add_option("--delta", delta, "Override the pair window")->check(CLI::PositiveNumber);
    app->add_option("--strategy", strategy, "Override pair strategy")->check(CLI::IsMember({"neighbors", "random"}));
    app->add_option("--lr", lr, "Override learning rate")->check(CLI::PositiveNumber);
    app->add_option("--batch-pairs", batch_pairs, "Override pairs per batch")->check(CLI::PositiveNumber);
    app->add_option("--uv-samples", uv_samples, "Override UV samples per pair")->check(CLI::PositiveNumber);
    app->add_option("--checkpoint-every", checkpoint_every, "Intermediate checkpoint cadence")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--log-every", log_every, "Progress line cadence (0: silent)")->check(CLI::NonNegativeNumber);
  }

  TrainConfig resolve(const Globals& g) const {
    TrainConfig base;
    if (preset == "desk") {
      base.architecture = desk_architecture();
      base.iterations = 5000;
      base.uv_samples_per_frame = 500;
    }
    TrainConfig c = config.empty() ? base : read_config(config, base);
    if (iterations) c.iterations = *iterations;
    if (alpha) c.alpha_mc = *alpha;
    if (delta) c.delta = *delta;
    if (strategy) c.strategy = parse_pair_strategy(*strategy);
    if (lr) c.lr = *lr;
    if (batch_pairs) c.batch_pairs = *batch_pairs;
    if (uv_samples) c.uv_samples_per_frame = *uv_samples;
    if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
    if (g.seed_given) c.seed = g.seed;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return c;
  }
};

TrainResult run_training(const PointCloudSequence& seq, const TrainConfig& config, const fs::path& dir,
                         int log_every, std::ostream& err) {
  const CheckpointSink sink = [&](const TrainingSnapshot& s) {
    const fs::path path = s.iteration == config.iterations
                              ? dir / "model.ckpt"
                              : dir / ("checkpoint_" + std::to_string(s.iteration) + ".ckpt");
    save_checkpoint(path, make_checkpoint(s));
  };
  const ProgressFn progress = [&](int it, const LossBreakdown& l) {
    if (log_every > 0 && (it % log_every == 0 || it + 1 == config.iterations)) {
      err << "iteration " << it << "  chamfer " << l.chamfer << "  metric " << l.metric << "  total " << l.total
          << '\n';
    }
  };
  return train_sequence(seq, config, sink, progress);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  ensure_parent_directory(path);
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporally coherent multi-patch atlases for point-cloud sequences", "mcatlas"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads (evaluation)")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence");
  std::string kind = "bending-plane";
  int frames = 20, points = 800;
  double amplitude = 1.0;
  synth->add_option("--kind", kind, "Synthetic family")
      ->check(CLI::IsMember({"bending-plane", "articulated-cylinder", "swinging-arm"}));
  synth->add_option("--frames", frames, "Frame count")->check(CLI::Range(2, 1 << 20));
  synth->add_option("--points", points, "Points per frame")->check(CLI::Range(10, 1 << 26));
  synth->add_option("--amplitude", amplitude, "Deformation amplitude");

  // align
  auto* align = app.add_subcommand("align", "Rotate frames about the vertical axis onto their predecessor");
  SequenceArgs align_seq;
  align_seq.add_to(align);
  double resolution = 1.0;
  align->add_option("--resolution", resolution, "Angle grid in degrees")->check(CLI::Range(1e-3, 180.0));
  std::string up = "y";
  align->add_option("--up", up, "Vertical axis")->check(CLI::IsMember({"x", "y", "z"}));

  // train
  auto* train = app.add_subcommand("train", "Optimize an atlas model on a sequence");
  SequenceArgs train_seq;
  train_seq.add_to(train);
  TrainArgs train_args;
  train_args.add_to(train);

  // sweep-delta
  auto* sweep = app.add_subcommand("sweep-delta", "Train once per pair window and evaluate each");
  SequenceArgs sweep_seq;
  sweep_seq.add_to(sweep);
  TrainArgs sweep_args;
  sweep_args.add_to(sweep);
  std::vector<int> deltas{1, 2, 3, 4, 5, 6};
  int sweep_pairs = 500, sweep_points = 3125;
  sweep->add_option("--deltas", deltas, "Pair windows to try")->check(CLI::PositiveNumber);
  sweep->add_option("--pairs", sweep_pairs, "Evaluation pairs per run")->check(CLI::PositiveNumber);
  sweep->add_option("--points", sweep_points, "Canonical samples per frame")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate correspondences against ground-truth ids");
  SequenceArgs eval_seq;
  eval_seq.add_to(eval);
  std::string eval_ckpt;
  int eval_pairs = 500, eval_points = 3125;
  double display_scale = 100.0;
  eval->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
  eval->add_option("--pairs", eval_pairs, "Random frame pairs")->check(CLI::PositiveNumber);
  eval->add_option("--points", eval_points, "Canonical samples per frame")->check(CLI::PositiveNumber);
  eval->add_option("--display-scale", display_scale, "Presentation multiplier for m_sl2 in the report");

  // infer
  auto* infer = app.add_subcommand("infer", "Map every point of one frame into another");
  SequenceArgs infer_seq;
  infer_seq.add_to(infer);
  std::string infer_ckpt;
  int source = 0, target = 1, infer_points = 3125;
  infer->add_option("--checkpoint", infer_ckpt, "Trained checkpoint")->required();
  infer->add_option("--source", source, "Source frame index")->check(CLI::NonNegativeNumber);
  infer->add_option("--target", target, "Target frame index")->check(CLI::NonNegativeNumber);
  infer->add_option("--points", infer_points, "Canonical samples per frame")->check(CLI::PositiveNumber);

  // export
  auto* exp = app.add_subcommand("export", "Write textured OBJ frames for visual inspection");
  SequenceArgs exp_seq;
  exp_seq.add_to(exp);
  std::string exp_ckpt;
  ExportOptions exp_opt;
  exp->add_option("--checkpoint", exp_ckpt, "Trained checkpoint")->required();
  exp->add_option("--samples", exp_opt.samples_per_frame, "Grid vertices per frame")->check(CLI::PositiveNumber);
  exp->add_option("--texture-size", exp_opt.texture_size, "Checkerboard size in pixels")->check(CLI::PositiveNumber);
  exp->add_option("--cells", exp_opt.checker_cells, "Checkerboard cells per side")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  g.seed_given = app.count("--seed") > 0;

  try {
    Rng rng(g.seed);
    if (*synth) {
      const PointCloudSequence seq = generate_synthetic(parse_synth_kind(kind), frames, points, amplitude, rng);
      write_sequence(g.out_dir, seq);
      out << "wrote " << seq.size() << " frames to " << g.out_dir.string() << "\n";
    } else if (*align) {
      const PointCloudSequence aligned = align_sequence(align_seq.load(g.seed), resolution, up[0] - 'x');
      write_sequence(g.out_dir, aligned);
      write_json(g.out_dir / "alignment.json", nlohmann::json{{"degrees", aligned.alignment_degrees},
                                                              {"resolution", resolution}});
      out << "aligned " << aligned.size() << " frames\n";
    } else if (*train) {
      const TrainConfig config = train_args.resolve(g);
      const PointCloudSequence seq = train_seq.load(g.seed);
      fs::create_directories(g.out_dir);
      write_config(g.out_dir / "config.json", config);
      const TrainResult r = run_training(seq, config, g.out_dir, train_args.log_every, err);
      write_loss_csv(g.out_dir / "loss.csv", r.history);
      out << "trained " << config.iterations << " iterations; checkpoint " << (g.out_dir / "model.ckpt").string()
          << "\n";
    } else if (*sweep) {
      const TrainConfig base = sweep_args.resolve(g);
      const PointCloudSequence seq = sweep_seq.load(g.seed, true);
      fs::create_directories(g.out_dir);
      std::ofstream csv(g.out_dir / "sweep.csv");
      csv << "delta,m_sl2,m_sl2_std,m_r,auc,chamfer\n";
      for (int d : deltas) {
        TrainConfig c = base;
        c.delta = d;
        c.checkpoint_every = 0;
        const fs::path run_dir = g.out_dir / ("delta_" + std::to_string(d));
        const TrainResult r = run_training(seq, c, run_dir, sweep_args.log_every, err);
        write_loss_csv(run_dir / "loss.csv", r.history);
        EvalOptions eo;
        eo.pairs = sweep_pairs;
        eo.points = sweep_points;
        eo.threads = g.threads;
        Rng eval_rng(c.seed);
        const EvalReport rep = evaluate_protocol(seq, r.model, eo, eval_rng);
        csv << d << ',' << rep.m_sl2.mean << ',' << rep.m_sl2.std << ',' << rep.m_r.mean << ',' << rep.auc.mean
            << ',' << rep.chamfer << '\n';
        out << "delta " << d << ": m_sl2 " << rep.m_sl2.mean << "  m_r " << rep.m_r.mean << "  auc "
            << rep.auc.mean << "\n";
      }
      if (!csv) throw std::runtime_error("cannot write sweep.csv");
    } else if (*eval) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const PointCloudSequence seq = eval_seq.load(g.seed);
      EvalOptions eo;
      eo.pairs = eval_pairs;
      eo.points = eval_points;
      eo.threads = g.threads;
      const EvalReport rep = evaluate_protocol(seq, ck.model(), eo, rng);
      write_eval_csv(g.out_dir / "eval_pairs.csv", rep);
      write_json(g.out_dir / "eval_report.json", eval_report_json(rep, display_scale));
      out << "m_sl2 " << rep.m_sl2.mean << " +- " << rep.m_sl2.std << "\nm_r " << rep.m_r.mean << " +- "
          << rep.m_r.std << "\nauc " << rep.auc.mean << " +- " << rep.auc.std << "\nchamfer " << rep.chamfer
          << "\n";
    } else if (*infer) {
      const Checkpoint ck = load_checkpoint(infer_ckpt);
      const PointCloudSequence seq = infer_seq.load(g.seed);
      const auto frames_n = static_cast<int>(seq.size());
      if (source >= frames_n || target >= frames_n) throw UsageError("frame index out of range");
      const AtlasModel model = ck.model();
      std::vector<Latent> latents;
      for (const auto& f : seq.frames) latents.push_back(encode(model, f));
      const UvLayout layout = sequence_uv_layout(model, latents, infer_points, rng);
      const auto si = surface_samples_from_layout(model, latents[static_cast<std::size_t>(source)], layout, source);
      const auto sj = surface_samples_from_layout(model, latents[static_cast<std::size_t>(target)], layout, target);
      CorrespondenceMap map = map_correspondence(seq.frames[static_cast<std::size_t>(source)],
                                                 seq.frames[static_cast<std::size_t>(target)], si, sj);
      if (seq.has_ids()) {
        attach_ground_truth(map, seq.frames[static_cast<std::size_t>(target)],
                            ground_truth_targets((*seq.ids)[static_cast<std::size_t>(source)],
                                                 (*seq.ids)[static_cast<std::size_t>(target)]));
      }
      const fs::path path = g.out_dir / ("correspondence_" + std::to_string(source) + "_" + std::to_string(target) +
                                         ".csv");
      write_correspondence_csv(path, map);
      out << "wrote " << path.string() << "\n";
    } else if (*exp) {
      const Checkpoint ck = load_checkpoint(exp_ckpt);
      const PointCloudSequence seq = exp_seq.load(g.seed);
      const auto files = export_visualization(ck.model(), seq, g.out_dir, exp_opt, rng);
      out << "wrote " << files.size() << " files to " << g.out_dir.string() << "\n";
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace mca
