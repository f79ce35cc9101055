#include "asc/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "asc/error.hpp"
#include "asc/model_io.hpp"
#include "asc/wav.hpp"

namespace asc {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw UsageError("config: unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_model_section(const json& j, ModelSpec& spec) {
  reject_unknown_keys(j,
                      {"kind", "n_classes", "n_mels", "cnn_channels", "jrm_channels", "attn_layers",
                       "attn_heads", "d_model", "pool_heads", "pool_attn_dim", "embedder",
                       "embed_dim", "frames_per_embedding", "embedder_seed", "strategy",
                       "scale_factor", "dropout_rate"},
                      "model");
  if (j.contains("kind")) spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
  maybe(j, "n_classes", spec.n_classes);
  maybe(j, "n_mels", spec.n_mels);
  maybe(j, "cnn_channels", spec.cnn_channels);
  maybe(j, "jrm_channels", spec.jrm_channels);
  maybe(j, "attn_layers", spec.attn_layers);
  maybe(j, "attn_heads", spec.attn_heads);
  maybe(j, "d_model", spec.d_model);
  maybe(j, "pool_heads", spec.pool_heads);
  maybe(j, "pool_attn_dim", spec.pool_attn_dim);
  if (j.contains("embedder")) {
    spec.embedder = embedder_kind_from_string(j.at("embedder").get<std::string>());
  }
  maybe(j, "embed_dim", spec.embed_dim);
  maybe(j, "frames_per_embedding", spec.frames_per_embedding);
  maybe(j, "embedder_seed", spec.embedder_seed);
  if (j.contains("strategy")) {
    spec.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  }
  maybe(j, "scale_factor", spec.scale_factor);
  maybe(j, "dropout_rate", spec.dropout_rate);
}

void parse_training_section(const json& j, TrainingConfig& cfg) {
  reject_unknown_keys(
      j, {"batch_size", "epochs", "optimizer", "lr", "warmup", "seed", "distill_temperature"},
      "training");
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "epochs", cfg.epochs);
  if (j.contains("optimizer")) {
    const std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "adam_fixed") {
      cfg.optimizer = OptimizerKind::adam_fixed;
    } else if (opt == "adam_warmup") {
      cfg.optimizer = OptimizerKind::adam_warmup;
    } else {
      throw UsageError("config: unknown optimizer '" + opt + "'");
    }
  }
  maybe(j, "lr", cfg.lr);
  if (j.contains("warmup")) {
    const json& w = j.at("warmup");
    reject_unknown_keys(w, {"k", "warmup_n", "d_model", "d_model_exponent"}, "training.warmup");
    maybe(w, "k", cfg.warmup.k);
    maybe(w, "warmup_n", cfg.warmup.warmup_n);
    maybe(w, "d_model", cfg.warmup.d_model);
    maybe(w, "d_model_exponent", cfg.warmup.d_model_exponent);
  }
  maybe(j, "seed", cfg.seed);
  maybe(j, "distill_temperature", cfg.distill_temperature);
}

void parse_features_section(const json& j, LogMelConfig& cfg) {
  reject_unknown_keys(
      j, {"sample_rate_hz", "frame_len_ms", "hop_ms", "n_mels", "log_floor", "fmin_hz", "fmax_hz"},
      "features");
  maybe(j, "sample_rate_hz", cfg.sample_rate_hz);
  maybe(j, "frame_len_ms", cfg.frame_len_ms);
  maybe(j, "hop_ms", cfg.hop_ms);
  maybe(j, "n_mels", cfg.n_mels);
  maybe(j, "log_floor", cfg.log_floor);
  maybe(j, "fmin_hz", cfg.fmin_hz);
  maybe(j, "fmax_hz", cfg.fmax_hz);
}

void parse_synth_section(const json& j, SynthConfig& cfg) {
  reject_unknown_keys(j,
                      {"n_scenes", "clips_per_scene", "folds", "min_seconds", "max_seconds",
                       "sample_rate", "seed"},
                      "synth");
  maybe(j, "n_scenes", cfg.n_scenes);
  maybe(j, "clips_per_scene", cfg.clips_per_scene);
  maybe(j, "folds", cfg.folds);
  maybe(j, "min_seconds", cfg.min_seconds);
  maybe(j, "max_seconds", cfg.max_seconds);
  maybe(j, "sample_rate", cfg.sample_rate);
  maybe(j, "seed", cfg.seed);
}

std::string cache_file_name(const std::filesystem::path& clip, const LogMelConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(cfg.hash()));
  return clip.stem().string() + "." + buf + ".ascf";
}

double mean_hard_loss(const Model<float>& model, const std::vector<TrainSample>& samples) {
  Rng rng = make_rng(0);
  double sum = 0.0;
  for (const auto& s : samples) {
    const ModelInput<float> input = make_input<float>(s.features, s.path);
    const Tensor<float> logits = forward_logits(model, input, /*training=*/false, rng);
    sum += static_cast<double>((*cross_entropy_hard(logits, s.label).data)[0]);
  }
  return sum / static_cast<double>(samples.size());
}

// Shared trainer for run_train and run_distill. `teachers` is empty for
// hard-label training.
TrainOutcome train_folds(const TrainArgs& args, const std::vector<Model<float>>& teachers,
                         CombineMode combine) {
  DatasetManifest manifest = DatasetManifest::load_csv(args.manifest_path);
  const std::vector<std::string> vocab = manifest.vocabulary();
  if (vocab.size() < 2) throw DataError("train: manifest needs at least 2 scenes");

  ModelSpec spec = args.model;
  spec.n_classes = static_cast<int>(vocab.size());
  spec.class_names = vocab;
  spec.validate();

  TeacherEnsemble<float> ensemble;
  for (const auto& t : teachers) ensemble.teachers.push_back(&t);
  ensemble.combine = combine;
  const bool distilling = !teachers.empty();
  if (distilling) {
    for (const auto& t : teachers) {
      if (t.spec.class_names != vocab) {
        throw DataError("distill: teacher vocabulary does not match the manifest");
      }
    }
  }

  // (train, eval, tag) splits to run.
  struct Split {
    DatasetManifest train;
    DatasetManifest eval;
    int fold;
  };
  std::vector<Split> splits;
  if (args.kfold > 0) {
    auto pairs = kfold_split(manifest, args.kfold);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      splits.push_back({std::move(pairs[i].first), std::move(pairs[i].second),
                        static_cast<int>(i) + 1});
    }
  } else if (args.eval_fold > 0) {
    DatasetManifest train, eval;
    for (const auto& r : manifest.records) {
      (r.fold == args.eval_fold ? eval : train).records.push_back(r);
    }
    if (train.records.empty() || eval.records.empty()) {
      throw DataError("train: eval fold " + std::to_string(args.eval_fold) +
                      " leaves an empty split");
    }
    splits.push_back({std::move(train), std::move(eval), args.eval_fold});
  } else {
    splits.push_back({manifest, manifest, 0});
  }

  TrainOutcome outcome;
  std::vector<EpochRow> all_rows;
  for (const Split& split : splits) {
    const std::vector<TrainSample> train_samples =
        load_samples(split.train, vocab, args.features, args.cache_dir);
    const std::vector<TrainSample> eval_samples =
        load_samples(split.eval, vocab, args.features, args.cache_dir);

    TrainingConfig cfg = args.training;
    if (args.kfold > 0) cfg.seed = derive_seed(args.training.seed, static_cast<std::uint64_t>(split.fold));

    Model<float> model = init_model<float>(spec, cfg.seed);
    TrainResult result =
        distilling ? train(model, train_samples, cfg, &ensemble) : train(model, train_samples, cfg);
    outcome.instances_per_epoch = result.instances_per_epoch;

    FoldOutcome fold;
    fold.fold = split.fold;
    fold.eval_macro = evaluate_macro(model, eval_samples);
    fold.final_train_loss = result.rows.empty() ? 0.0 : result.rows.back().loss;

    EpochRow eval_row;
    eval_row.epoch = cfg.epochs;
    eval_row.split = "eval";
    eval_row.loss = mean_hard_loss(model, eval_samples);
    eval_row.macro_accuracy = fold.eval_macro;
    eval_row.lr = result.rows.empty() ? 0.0 : result.rows.back().lr;
    result.rows.push_back(eval_row);

    fold.model_path = args.model_out;
    if (args.kfold > 0) {
      fold.model_path += ".fold" + std::to_string(split.fold);
    }
    if (!fold.model_path.empty()) save_model(fold.model_path, model);

    all_rows.insert(all_rows.end(), result.rows.begin(), result.rows.end());
    outcome.folds.push_back(std::move(fold));
  }

  double sum = 0.0;
  for (const auto& f : outcome.folds) sum += f.eval_macro;
  outcome.mean_eval_macro = sum / static_cast<double>(outcome.folds.size());

  if (!args.log_csv.empty()) append_log_csv(args.log_csv, all_rows);
  return outcome;
}

}  // namespace

RunConfig parse_run_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  reject_unknown_keys(j, {"model", "training", "features", "synth"}, "<root>");
  if (j.contains("model")) parse_model_section(j.at("model"), cfg.model);
  if (j.contains("training")) parse_training_section(j.at("training"), cfg.training);
  if (j.contains("features")) parse_features_section(j.at("features"), cfg.features);
  if (j.contains("synth")) parse_synth_section(j.at("synth"), cfg.synth);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_run_config_json(text);
}

FeatureMatrix features_for_clip(const std::filesystem::path& clip, const LogMelConfig& cfg,
                                const std::filesystem::path& cache_dir) {
  if (!cache_dir.empty()) {
    const std::filesystem::path cached = cache_dir / cache_file_name(clip, cfg);
    if (std::filesystem::exists(cached)) {
      FeatureMatrix fm = read_feature_cache(cached);
      fm.source = clip.string();
      fm.config_hash = cfg.hash();
      return fm;
    }
  }
  WavData wav = read_wav_mono(clip);
  std::vector<float> samples = wav.sample_rate == static_cast<int>(cfg.sample_rate_hz)
                                   ? std::move(wav.samples)
                                   : resample_linear(wav.samples, wav.sample_rate, cfg.sample_rate_hz);
  FeatureMatrix fm = log_mel(samples, cfg);
  fm.source = clip.string();
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    write_feature_cache(cache_dir / cache_file_name(clip, cfg), fm);
  }
  return fm;
}

std::vector<TrainSample> load_samples(const DatasetManifest& manifest,
                                      const std::vector<std::string>& class_names,
                                      const LogMelConfig& cfg,
                                      const std::filesystem::path& cache_dir) {
  std::vector<TrainSample> samples;
  samples.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    const auto it = std::find(class_names.begin(), class_names.end(), r.scene);
    if (it == class_names.end()) {
      throw DataError("manifest: scene '" + r.scene + "' not in the model vocabulary");
    }
    TrainSample s;
    s.features = features_for_clip(r.path, cfg, cache_dir);
    s.path = r.path;
    s.label = static_cast<int>(it - class_names.begin());
    samples.push_back(std::move(s));
  }
  return samples;
}

DatasetManifest run_synth(const SynthArgs& args) {
  if (args.out_dir.empty()) throw UsageError("synth: out_dir is required");
  return synthesize_corpus(args.out_dir, args.synth);
}

TrainOutcome run_train(const TrainArgs& args) { return train_folds(args, {}, CombineMode::augmented); }

TrainOutcome run_distill(const DistillArgs& args) {
  if (args.teacher_paths.empty() || args.teacher_paths.size() > 3) {
    throw UsageError("distill: expected 1..3 teacher files");
  }
  std::vector<Model<float>> teachers;
  teachers.reserve(args.teacher_paths.size());
  for (const auto& p : args.teacher_paths) teachers.push_back(load_model(p));
  for (const auto& t : teachers) {
    if (t.spec.n_classes != teachers[0].spec.n_classes) {
      throw DataError("distill: teachers disagree on n_classes");
    }
  }

  // The student is always the compact base architecture.
  TrainArgs train_args = args.train;
  train_args.model.kind = ModelKind::base;
  train_args.model.embedder = EmbedderKind::none;
  train_args.model.strategy = Strategy::from_scratch;
  return train_folds(train_args, teachers, args.combine);
}

EvalOutcome run_eval(const EvalArgs& args) {
  const Model<float> model = load_model(args.model_path);
  if (model.spec.class_names.empty()) {
    throw DataError("eval: model carries no class vocabulary");
  }
  DatasetManifest manifest = DatasetManifest::load_csv(args.manifest_path);
  for (const std::string& scene : manifest.vocabulary()) {
    if (std::find(model.spec.class_names.begin(), model.spec.class_names.end(), scene) ==
        model.spec.class_names.end()) {
      throw DataError("eval: manifest scene '" + scene + "' not in the model vocabulary");
    }
  }

  const std::vector<TrainSample> samples =
      load_samples(manifest, model.spec.class_names, args.features, args.cache_dir);
  const std::vector<int> preds = predict_labels(model, samples);

  EvalOutcome out;
  out.predictions = preds;
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  out.macro = macro_accuracy(preds, labels);

  for (const std::string& scene : manifest.vocabulary()) {
    ClassCount c;
    c.scene = scene;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (manifest.records[i].scene != scene) continue;
      c.total += 1;
      if (preds[i] == samples[i].label) c.correct += 1;
    }
    out.per_class.push_back(std::move(c));
  }

  if (!args.csv_out.empty()) {
    std::ofstream os(args.csv_out);
    if (!os) throw DataError("eval: cannot write " + args.csv_out.string());
    os << "class,correct,total,accuracy\n";
    char buf[160];
    for (const auto& c : out.per_class) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.6f\n", c.scene.c_str(), c.correct, c.total,
                    static_cast<double>(c.correct) / static_cast<double>(c.total));
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "macro,,,%.6f\n", out.macro);
    os << buf;
  }
  return out;
}

ClassifyOutcome run_classify(const ClassifyArgs& args) {
  const Model<float> model = load_model(args.model_path);
  WavData wav = read_wav_mono(args.wav_path);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<float> samples =
      wav.sample_rate == static_cast<int>(args.features.sample_rate_hz)
          ? std::move(wav.samples)
          : resample_linear(wav.samples, wav.sample_rate, args.features.sample_rate_hz);
  const FeatureMatrix fm = log_mel(samples, args.features);
  Rng rng = make_rng(0);
  const ModelInput<float> input = make_input<float>(fm, args.wav_path.string());
  const Tensor<float> logits = forward_logits(model, input, /*training=*/false, rng);
  const auto t1 = std::chrono::steady_clock::now();

  const std::vector<float> probs = softmax_values(logits);
  ClassifyOutcome out;
  out.seconds = std::chrono::duration<double>(t1 - t0).count();
  const int top = argmax_index(logits);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::string name = i < model.spec.class_names.size()
                                 ? model.spec.class_names[i]
                                 : "class" + std::to_string(i);
    out.probabilities.emplace_back(name, static_cast<double>(probs[i]));
  }
  out.label = out.probabilities[static_cast<std::size_t>(top)].first;
  return out;
}

}  // namespace asc
