// asckit: synthesize corpora, train/distill scene classifiers, evaluate, and
// classify single clips. Subcommands: synth, train, distill, eval, classify.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asc/cli.hpp"
#include "asc/error.hpp"
#include "asc/model_io.hpp"

namespace {

using namespace asc;

// --config FILE provides defaults; explicit flags override its keys.
RunConfig preload_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      return load_run_config(argv[i + 1]);
    }
  }
  return RunConfig{};
}

void add_feature_flags(CLI::App* cmd, LogMelConfig& f) {
  cmd->add_option("--feature-rate", f.sample_rate_hz, "Feature sample rate in Hz");
  cmd->add_option("--frame-ms", f.frame_len_ms, "Analysis frame length in ms");
  cmd->add_option("--hop-ms", f.hop_ms, "Hop between frames in ms");
  cmd->add_option("--n-mels", f.n_mels, "Mel bins per frame");
}

void add_model_flags(CLI::App* cmd, ModelSpec& m, std::string& arch, std::string& strategy,
                     std::string& embedder) {
  cmd->add_option("--arch", arch, "Architecture: base, vfm, jrm, cmam");
  cmd->add_option("--strategy", strategy, "from_scratch, feature_based, fine_tuning");
  cmd->add_option("--embedder", embedder, "none, surrogate, file_backed");
  cmd->add_option("--scale", m.scale_factor, "Width scale factor (1.0 = paper sizes)");
  cmd->add_option("--attn-layers", m.attn_layers, "Self-attention layers (cmam)");
  cmd->add_option("--attn-heads", m.attn_heads, "Attention heads per layer");
  cmd->add_option("--d-model", m.d_model, "Attention projection width");
  cmd->add_option("--pool-heads", m.pool_heads, "Attention-pooling heads");
  cmd->add_option("--pool-attn-dim", m.pool_attn_dim, "Attention-pooling score width");
  cmd->add_option("--embed-dim", m.embed_dim, "Event-embedding width");
  cmd->add_option("--frames-per-embedding", m.frames_per_embedding, "Frames per embedding patch");
  cmd->add_option("--embedder-seed", m.embedder_seed, "Seed of the frozen surrogate embedder");
  cmd->add_option("--dropout", m.dropout_rate, "Dropout rate inside attention blocks");
}

void add_training_flags(CLI::App* cmd, TrainingConfig& t, std::string& optimizer) {
  cmd->add_option("--epochs", t.epochs, "Training epochs");
  cmd->add_option("--batch-size", t.batch_size, "Batch size");
  cmd->add_option("--lr", t.lr, "Fixed Adam learning rate");
  cmd->add_option("--optimizer", optimizer, "adam_fixed or adam_warmup");
  cmd->add_option("--warmup-k", t.warmup.k, "Warmup schedule k");
  cmd->add_option("--warmup-n", t.warmup.warmup_n, "Warmup step count");
  cmd->add_option("--warmup-dmodel", t.warmup.d_model, "Warmup schedule d_model");
  cmd->add_option("--warmup-exponent", t.warmup.d_model_exponent,
                  "d_model exponent (-0.5 cited schedule, +0.5 literal)");
  cmd->add_option("--seed", t.seed, "RNG seed");
  cmd->add_option("--temperature", t.distill_temperature, "Distillation temperature");
}

void print_train_outcome(const TrainOutcome& out) {
  for (const auto& f : out.folds) {
    if (f.fold > 0) {
      std::printf("fold %d: eval macro accuracy %.4f (model: %s)\n", f.fold, f.eval_macro,
                  f.model_path.string().c_str());
    } else {
      std::printf("eval macro accuracy %.4f (model: %s)\n", f.eval_macro,
                  f.model_path.string().c_str());
    }
  }
  std::printf("instances per epoch: %zu\n", out.instances_per_epoch);
  std::printf("mean macro accuracy: %.4f\n", out.mean_eval_macro);
}

int run(int argc, char** argv) {
  RunConfig cfg = preload_config(argc, argv);

  CLI::App app{"Acoustic scene classification toolkit"};
  app.require_subcommand(1);
  std::string config_path;  // consumed by preload_config; registered so CLI11 accepts it
  app.add_option("--config", config_path, "JSON config file with defaults")
      ->check(CLI::ExistingFile);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic corpus");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--scenes", cfg.synth.n_scenes, "Number of scenes");
  synth->add_option("--clips-per-scene", cfg.synth.clips_per_scene, "Clips per scene");
  synth->add_option("--folds", cfg.synth.folds, "Round-robin fold count");
  synth->add_option("--min-seconds", cfg.synth.min_seconds, "Shortest clip length");
  synth->add_option("--max-seconds", cfg.synth.max_seconds, "Longest clip length");
  synth->add_option("--sample-rate", cfg.synth.sample_rate, "Corpus sample rate");
  synth->add_option("--seed", cfg.synth.seed, "Corpus seed");

  // train
  auto* train = app.add_subcommand("train", "Train one architecture on a manifest");
  std::string train_manifest, train_model_out, train_log, train_cache;
  std::string arch = to_string(cfg.model.kind);
  std::string strategy = to_string(cfg.model.strategy);
  std::string embedder = to_string(cfg.model.embedder);
  std::string optimizer =
      cfg.training.optimizer == OptimizerKind::adam_fixed ? "adam_fixed" : "adam_warmup";
  int kfold = 0, eval_fold = 0;
  train->add_option("--manifest", train_manifest, "manifest.csv")->required();
  train->add_option("--model-out", train_model_out, "Output .ascm file")->required();
  train->add_option("--log", train_log, "Per-epoch CSV log");
  train->add_option("--cache-dir", train_cache, "Feature cache directory");
  train->add_option("--kfold", kfold, "Cross-validate over k folds (one model per fold)");
  train->add_option("--eval-fold", eval_fold, "Hold out one fold for evaluation");
  add_model_flags(train, cfg.model, arch, strategy, embedder);
  add_training_flags(train, cfg.training, optimizer);
  add_feature_flags(train, cfg.features);

  // distill
  auto* distill = app.add_subcommand("distill", "Distill teachers into a compact base student");
  std::string distill_manifest, distill_model_out, distill_log, distill_cache;
  std::vector<std::string> teacher_paths;
  std::string combine = "augmented";
  int d_kfold = 0, d_eval_fold = 0;
  distill->add_option("--manifest", distill_manifest, "manifest.csv")->required();
  distill->add_option("--teacher", teacher_paths, "Teacher model file (repeat for 2-3)")
      ->required()
      ->expected(1, 3);
  distill->add_option("--model-out", distill_model_out, "Output student .ascm")->required();
  distill->add_option("--log", distill_log, "Per-epoch CSV log");
  distill->add_option("--cache-dir", distill_cache, "Feature cache directory");
  distill->add_option("--combine", combine, "augmented or average multi-teacher mode");
  distill->add_option("--kfold", d_kfold, "Cross-validate over k folds");
  distill->add_option("--eval-fold", d_eval_fold, "Hold out one fold for evaluation");
  add_model_flags(distill, cfg.model, arch, strategy, embedder);
  add_training_flags(distill, cfg.training, optimizer);
  add_feature_flags(distill, cfg.features);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model file on a manifest");
  std::string eval_model, eval_manifest, eval_csv, eval_cache;
  eval->add_option("--model", eval_model, "Model .ascm file")->required();
  eval->add_option("--manifest", eval_manifest, "manifest.csv")->required();
  eval->add_option("--csv", eval_csv, "Write the per-class report as CSV");
  eval->add_option("--cache-dir", eval_cache, "Feature cache directory");
  add_feature_flags(eval, cfg.features);

  // classify
  auto* classify = app.add_subcommand("classify", "Classify one WAV clip");
  std::string cls_model, cls_wav;
  classify->add_option("--model", cls_model, "Model .ascm file")->required();
  classify->add_option("--wav", cls_wav, "Clip to classify")->required();
  add_feature_flags(classify, cfg.features);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  cfg.model.kind = model_kind_from_string(arch);
  cfg.model.strategy = strategy_from_string(strategy);
  cfg.model.embedder = embedder_kind_from_string(embedder);
  if (optimizer == "adam_fixed") {
    cfg.training.optimizer = OptimizerKind::adam_fixed;
  } else if (optimizer == "adam_warmup") {
    cfg.training.optimizer = OptimizerKind::adam_warmup;
  } else {
    throw UsageError("unknown optimizer: " + optimizer);
  }

  if (*synth) {
    SynthArgs args;
    args.out_dir = synth_out;
    args.synth = cfg.synth;
    const DatasetManifest manifest = run_synth(args);
    std::printf("wrote %zu clips and %s\n", manifest.records.size(),
                (args.out_dir / "manifest.csv").string().c_str());
  } else if (*train) {
    TrainArgs args;
    args.manifest_path = train_manifest;
    args.model_out = train_model_out;
    args.log_csv = train_log;
    args.cache_dir = train_cache;
    args.model = cfg.model;
    args.training = cfg.training;
    args.features = cfg.features;
    args.kfold = kfold;
    args.eval_fold = eval_fold;
    print_train_outcome(run_train(args));
  } else if (*distill) {
    DistillArgs args;
    args.train.manifest_path = distill_manifest;
    args.train.model_out = distill_model_out;
    args.train.log_csv = distill_log;
    args.train.cache_dir = distill_cache;
    args.train.model = cfg.model;
    args.train.training = cfg.training;
    args.train.features = cfg.features;
    args.train.kfold = d_kfold;
    args.train.eval_fold = d_eval_fold;
    for (const auto& t : teacher_paths) args.teacher_paths.emplace_back(t);
    if (combine == "augmented") {
      args.combine = CombineMode::augmented;
    } else if (combine == "average") {
      args.combine = CombineMode::average;
    } else {
      throw UsageError("unknown combine mode: " + combine);
    }
    print_train_outcome(run_distill(args));
  } else if (*eval) {
    EvalArgs args;
    args.model_path = eval_model;
    args.manifest_path = eval_manifest;
    args.csv_out = eval_csv;
    args.cache_dir = eval_cache;
    args.features = cfg.features;
    const EvalOutcome out = run_eval(args);
    std::printf("%-16s %8s %8s %10s\n", "class", "correct", "total", "accuracy");
    for (const auto& c : out.per_class) {
      std::printf("%-16s %8zu %8zu %10.4f\n", c.scene.c_str(), c.correct, c.total,
                  static_cast<double>(c.correct) / static_cast<double>(c.total));
    }
    std::printf("macro accuracy: %.4f\n", out.macro);
  } else if (*classify) {
    ClassifyArgs args;
    args.model_path = cls_model;
    args.wav_path = cls_wav;
    args.features = cfg.features;
    const ClassifyOutcome out = run_classify(args);
    std::printf("label: %s\n", out.label.c_str());
    for (const auto& [name, p] : out.probabilities) {
      std::printf("  %-16s %.6f\n", name.c_str(), p);
    }
    std::printf("inference time: %.3f s\n", out.seconds);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const asc::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const asc::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const asc::Error& e) {  // data, shape, format
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
