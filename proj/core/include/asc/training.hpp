#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asc/manifest.hpp"
#include "asc/model.hpp"

namespace asc {

// lrate = k * d_model^e * min(n^-0.5, n * warmup_n^-1.5). The default
// exponent is -0.5 (the cited schedule); +0.5 is available for the variant
// that grows with model width.
struct WarmupSchedule {
  double k = 0.5;
  long warmup_n = 8000;
  int d_model = 2048;
  double d_model_exponent = -0.5;

  double lr(long n) const {
    if (n < 1) throw UsageError("warmup_lr: step number must be >= 1");
    if (warmup_n < 1) throw UsageError("warmup_lr: warmup_n must be >= 1");
    const double arm_decay = 1.0 / std::sqrt(static_cast<double>(n));
    const double arm_ramp =
        static_cast<double>(n) * std::pow(static_cast<double>(warmup_n), -1.5);
    return k * std::pow(static_cast<double>(d_model), d_model_exponent) *
           std::min(arm_decay, arm_ramp);
  }
};

inline double warmup_lr(long n, double k, int d_model, long warmup_n,
                        double d_model_exponent = -0.5) {
  return WarmupSchedule{k, warmup_n, d_model, d_model_exponent}.lr(n);
}

enum class OptimizerKind { adam_fixed, adam_warmup };
enum class CombineMode { augmented, average };

struct TrainingConfig {
  int batch_size = 16;
  int epochs = 30;
  OptimizerKind optimizer = OptimizerKind::adam_fixed;
  double lr = 0.001;
  WarmupSchedule warmup;
  std::uint64_t seed = 1;
  double distill_temperature = 1.0;

  void validate() const {
    if (batch_size < 1) throw UsageError("training: batch_size must be >= 1");
    if (epochs < 1) throw UsageError("training: epochs must be >= 1");
    if (lr < 0.0) throw UsageError("training: lr must be >= 0");
    if (warmup.warmup_n < 1) throw UsageError("training: warmup_n must be >= 1");
    if (distill_temperature <= 0.0) throw UsageError("training: temperature must be positive");
  }
};

// -log softmax(logits)[label]
template <typename T>
Tensor<T> cross_entropy_hard(const Tensor<T>& logits, int label) {
  if (logits.rank() != 1) throw ShapeError("cross_entropy: logits must be rank 1");
  const std::size_t k = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= k) {
    throw UsageError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(k) + " classes");
  }
  T mx = (*logits.data)[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, (*logits.data)[i]);
  T sum = 0;
  auto probs = std::make_shared<std::vector<T>>(k);
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] = std::exp((*logits.data)[i] - mx);
    sum += (*probs)[i];
  }
  for (std::size_t i = 0; i < k; ++i) (*probs)[i] /= sum;
  Tensor<T> loss = Tensor<T>::scalar(-((*logits.data)[static_cast<std::size_t>(label)] - mx -
                                       std::log(sum)));
  ensure_all_finite(loss, "cross_entropy");
  if (Tape<T>* tp = joint_tape<T>({&logits})) {
    const int ln = logits.node;
    tp->record(loss, {ln}, [ln, probs, label, k](Tape<T>& t, const std::vector<T>& g) {
      if (ln < 0) return;
      auto& gl = t.grad(ln);
      for (std::size_t i = 0; i < k; ++i) {
        const T onehot = static_cast<std::size_t>(label) == i ? T(1) : T(0);
        gl[i] += g[0] * ((*probs)[i] - onehot);
      }
    });
  }
  return loss;
}

// L = -sum_i q_i log p_i with p = softmax(logits / temperature). With
// temperature 1 this is the plain soft-label cross entropy.
template <typename T>
Tensor<T> distill_loss(const Tensor<T>& logits, const std::vector<T>& teacher_soft,
                       T temperature = T(1)) {
  if (logits.rank() != 1) throw ShapeError("distill_loss: logits must be rank 1");
  const std::size_t k = logits.size();
  if (teacher_soft.size() != k) {
    throw ShapeError("distill_loss: teacher distribution size " +
                     std::to_string(teacher_soft.size()) + " vs " + std::to_string(k) + " logits");
  }
  if (temperature <= T(0)) throw UsageError("distill_loss: temperature must be positive");
  double q_sum = 0.0;
  for (const T q : teacher_soft) {
    if (q < T(0)) throw UsageError("distill_loss: teacher distribution has negative mass");
    q_sum += static_cast<double>(q);
  }
  if (std::abs(q_sum - 1.0) > 1e-6) {
    throw UsageError("distill_loss: teacher distribution sums to " + std::to_string(q_sum));
  }

  T mx = (*logits.data)[0] / temperature;
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, (*logits.data)[i] / temperature);
  T sum = 0;
  auto probs = std::make_shared<std::vector<T>>(k);
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] = std::exp((*logits.data)[i] / temperature - mx);
    sum += (*probs)[i];
  }
  const T log_sum = std::log(sum);
  T loss_val = 0;
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] /= sum;
    // log p_i computed from logits for stability
    const T log_p = (*logits.data)[i] / temperature - mx - log_sum;
    loss_val -= teacher_soft[i] * log_p;
  }
  Tensor<T> loss = Tensor<T>::scalar(loss_val);
  ensure_all_finite(loss, "distill_loss");
  if (Tape<T>* tp = joint_tape<T>({&logits})) {
    const int ln = logits.node;
    auto q = std::make_shared<std::vector<T>>(teacher_soft);
    tp->record(loss, {ln}, [ln, probs, q, temperature, k](Tape<T>& t, const std::vector<T>& g) {
      if (ln < 0) return;
      auto& gl = t.grad(ln);
      for (std::size_t i = 0; i < k; ++i) {
        gl[i] += g[0] * ((*probs)[i] - (*q)[i]) / temperature;
      }
    });
  }
  return loss;
}

// Bias-corrected Adam. Moments are kept per parameter name.
template <typename T>
struct AdamState {
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
  long step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, const std::vector<std::string>& names,
               const std::map<std::string, std::vector<T>>& grads, AdamState<T>& state, T lr) {
  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta1), t));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta2), t));
  for (const std::string& name : names) {
    auto pit = params.find(name);
    auto git = grads.find(name);
    if (pit == params.end() || git == grads.end()) {
      throw UsageError("adam: missing parameter or gradient for " + name);
    }
    Tensor<T>& p = pit->second;
    const std::vector<T>& g = git->second;
    if (g.size() != p.size()) {
      throw ShapeError("adam: gradient size mismatch for " + name);
    }
    for (const T gv : g) {
      if (!std::isfinite(gv)) throw NumericError("adam: non-finite gradient for " + name);
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), T(0));
    if (v.empty()) v.assign(p.size(), T(0));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      (*p.data)[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// Splits a manifest by its fold column: split i holds out fold i+1. Folds
// must cover exactly 1..k with every fold non-empty.
std::vector<std::pair<DatasetManifest, DatasetManifest>> kfold_split(const DatasetManifest& manifest,
                                                                     int k);

// Unweighted mean of per-class accuracies over the classes present in
// `labels`.
double macro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

template <typename T>
struct TeacherEnsemble {
  std::vector<const Model<T>*> teachers;
  CombineMode combine = CombineMode::augmented;

  void validate() const {
    if (teachers.empty() || teachers.size() > 3) {
      throw UsageError("ensemble: expected 1..3 teachers, got " + std::to_string(teachers.size()));
    }
    for (const auto* t : teachers) {
      if (t == nullptr) throw UsageError("ensemble: null teacher");
      if (t->spec.n_classes != teachers[0]->spec.n_classes) {
        throw UsageError("ensemble: teachers disagree on n_classes");
      }
    }
  }
};

template <typename T>
std::vector<T> softmax_values(const Tensor<T>& logits) {
  const Tensor<T> p = softmax(logits.detached(), 0);
  return *p.data;
}

template <typename T>
int argmax_index(const Tensor<T>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if ((*logits.data)[i] > (*logits.data)[best]) best = i;
  }
  return static_cast<int>(best);
}

// Soft labels for one clip. Augmented mode yields one distribution per
// teacher (the clip becomes |teachers| training instances); average mode
// yields a single arithmetic-mean distribution.
template <typename T>
std::vector<std::vector<T>> teacher_soft_labels(const TeacherEnsemble<T>& ensemble,
                                                const ModelInput<T>& input) {
  ensemble.validate();
  Rng rng = make_rng(0);  // dropout is off outside training
  std::vector<std::vector<T>> per_teacher;
  per_teacher.reserve(ensemble.teachers.size());
  for (const Model<T>* teacher : ensemble.teachers) {
    const Tensor<T> logits = forward_logits(*teacher, input, /*training=*/false, rng);
    per_teacher.push_back(softmax_values(logits));
  }
  if (ensemble.combine == CombineMode::augmented) return per_teacher;
  std::vector<T> mean(per_teacher[0].size(), T(0));
  for (const auto& q : per_teacher) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += q[i];
  }
  for (auto& v : mean) v /= static_cast<T>(per_teacher.size());
  return {mean};
}

struct TrainSample {
  FeatureMatrix features;
  std::string path;
  int label = 0;
};

struct EpochRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double macro_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::size_t instances_per_epoch = 0;
};

void append_log_csv(const std::filesystem::path& path, const std::vector<EpochRow>& rows);

template <typename T>
std::vector<int> predict_labels(const Model<T>& model, const std::vector<TrainSample>& samples) {
  Rng rng = make_rng(0);
  std::vector<int> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) {
    const ModelInput<T> input = make_input<T>(s.features, s.path);
    preds.push_back(argmax_index(forward_logits(model, input, /*training=*/false, rng)));
  }
  return preds;
}

template <typename T>
double evaluate_macro(const Model<T>& model, const std::vector<TrainSample>& samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return macro_accuracy(predict_labels(model, samples), labels);
}

// Epoch loop with seeded shuffling. Hard-label cross entropy when no
// ensemble is given; soft-label distillation over ensemble-expanded
// instances otherwise. Deterministic for a fixed seed.
template <typename T>
TrainResult train(Model<T>& model, const std::vector<TrainSample>& samples,
                  const TrainingConfig& cfg, const TeacherEnsemble<T>* ensemble = nullptr) {
  cfg.validate();
  if (samples.empty()) throw UsageError("train: empty sample list");
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= model.spec.n_classes) {
      throw UsageError("train: label out of range for " + s.path);
    }
  }

  Rng rng = make_rng(cfg.seed);

  // Frozen per-sample inputs, reused across epochs.
  std::vector<ModelInput<T>> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) inputs.push_back(make_input<T>(s.features, s.path));

  // Instance list: (sample, soft-label slot). Slot -1 means hard label.
  struct Instance {
    std::size_t sample;
    int soft_slot;
  };
  std::vector<Instance> instances;
  std::vector<std::vector<std::vector<T>>> soft;  // [sample][slot]
  if (ensemble != nullptr) {
    ensemble->validate();
    soft.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      soft[i] = teacher_soft_labels(*ensemble, inputs[i]);
      for (std::size_t s = 0; s < soft[i].size(); ++s) {
        instances.push_back({i, static_cast<int>(s)});
      }
    }
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i) instances.push_back({i, -1});
  }

  const std::vector<std::string> trainable = trainable_param_names(model);
  AdamState<T> adam;
  long global_step = 0;
  TrainResult result;
  result.instances_per_epoch = instances.size();

  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::vector<int> epoch_preds, epoch_labels;
    double last_lr = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t batch_n = end - start;

      Tape<T> tape;
      for (const std::string& name : trainable) tape.watch(model.param(name));

      Tensor<T> total;
      bool first = true;
      for (std::size_t bi = start; bi < end; ++bi) {
        const Instance& inst = instances[order[bi]];
        const Tensor<T> logits = forward_logits(model, inputs[inst.sample], /*training=*/true, rng);
        epoch_preds.push_back(argmax_index(logits));
        epoch_labels.push_back(samples[inst.sample].label);
        Tensor<T> loss_i;
        if (inst.soft_slot < 0) {
          loss_i = cross_entropy_hard(logits, samples[inst.sample].label);
        } else {
          loss_i = distill_loss(logits, soft[inst.sample][static_cast<std::size_t>(inst.soft_slot)],
                                static_cast<T>(cfg.distill_temperature));
        }
        total = first ? loss_i : add(total, loss_i);
        first = false;
      }
      const Tensor<T> loss = scale(total, T(1) / static_cast<T>(batch_n));
      epoch_loss += static_cast<double>((*loss.data)[0]) * static_cast<double>(batch_n);

      tape.backward(loss);

      std::map<std::string, std::vector<T>> grads;
      for (const std::string& name : trainable) {
        grads[name] = tape.grad_view(model.param(name).node);
      }

      ++global_step;
      last_lr = cfg.optimizer == OptimizerKind::adam_fixed ? cfg.lr : cfg.warmup.lr(global_step);
      adam_step(model.params, trainable, grads, adam, static_cast<T>(last_lr));
      model.detach_params();
    }

    result.rows.push_back(EpochRow{epoch, "train", epoch_loss / static_cast<double>(order.size()),
                                   macro_accuracy(epoch_preds, epoch_labels), last_lr});
  }
  model.detach_params();
  return result;
}

}  // namespace asc
