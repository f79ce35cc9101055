#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asc/dsp.hpp"
#include "asc/manifest.hpp"
#include "asc/model.hpp"
#include "asc/synth.hpp"
#include "asc/training.hpp"

namespace asc {

// Full run configuration. The JSON config file mirrors this; every CLI flag
// overrides its config key. Unknown keys are rejected.
struct RunConfig {
  ModelSpec model;
  TrainingConfig training;
  LogMelConfig features;
  SynthConfig synth;

  RunConfig() {
    model.scale_factor = 0.125;  // desk scale by default; 1.0 restores paper widths
  }
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config_json(const std::string& text);

// Decode + resample + log-mel for one clip, with an optional binary feature
// cache keyed by the config hash.
FeatureMatrix features_for_clip(const std::filesystem::path& clip, const LogMelConfig& cfg,
                                const std::filesystem::path& cache_dir = {});

// Samples for a manifest with labels resolved against `class_names`.
std::vector<TrainSample> load_samples(const DatasetManifest& manifest,
                                      const std::vector<std::string>& class_names,
                                      const LogMelConfig& cfg,
                                      const std::filesystem::path& cache_dir = {});

struct SynthArgs {
  std::filesystem::path out_dir;
  SynthConfig synth;
};

DatasetManifest run_synth(const SynthArgs& args);

struct TrainArgs {
  std::filesystem::path manifest_path;
  std::filesystem::path model_out;
  std::filesystem::path log_csv;    // optional
  std::filesystem::path cache_dir;  // optional
  ModelSpec model;
  TrainingConfig training;
  LogMelConfig features;
  int kfold = 0;      // > 0: cross-validation, one model per fold
  int eval_fold = 0;  // single split: hold this fold out (0 = evaluate on train data)
};

struct FoldOutcome {
  int fold = 0;
  double eval_macro = 0.0;
  double final_train_loss = 0.0;
  std::filesystem::path model_path;
};

struct TrainOutcome {
  double mean_eval_macro = 0.0;
  std::vector<FoldOutcome> folds;
  std::size_t instances_per_epoch = 0;
};

TrainOutcome run_train(const TrainArgs& args);

struct DistillArgs {
  TrainArgs train;
  std::vector<std::filesystem::path> teacher_paths;  // 1..3
  CombineMode combine = CombineMode::augmented;
};

TrainOutcome run_distill(const DistillArgs& args);

struct EvalArgs {
  std::filesystem::path model_path;
  std::filesystem::path manifest_path;
  std::filesystem::path csv_out;    // optional
  std::filesystem::path cache_dir;  // optional
  LogMelConfig features;
};

struct ClassCount {
  std::string scene;
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalOutcome {
  double macro = 0.0;
  std::vector<ClassCount> per_class;
  std::vector<int> predictions;  // model-vocabulary label indices, manifest order
};

EvalOutcome run_eval(const EvalArgs& args);

struct ClassifyArgs {
  std::filesystem::path model_path;
  std::filesystem::path wav_path;
  LogMelConfig features;
};

struct ClassifyOutcome {
  std::string label;
  std::vector<std::pair<std::string, double>> probabilities;  // per class
  double seconds = 0.0;                                       // features + forward wall clock
};

ClassifyOutcome run_classify(const ClassifyArgs& args);

}  // namespace asc
