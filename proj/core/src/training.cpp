#include "asc/training.hpp"

#include <fstream>
#include <map>
#include <set>

#include "asc/error.hpp"

namespace asc {

std::vector<std::pair<DatasetManifest, DatasetManifest>> kfold_split(const DatasetManifest& manifest,
                                                                     int k) {
  if (k < 2) throw UsageError("kfold: k must be >= 2");
  manifest.validate();
  std::set<int> seen;
  for (const auto& r : manifest.records) {
    if (r.fold < 1 || r.fold > k) {
      throw DataError("kfold: fold " + std::to_string(r.fold) + " out of range 1.." +
                      std::to_string(k) + " for " + r.path);
    }
    seen.insert(r.fold);
  }
  for (int f = 1; f <= k; ++f) {
    if (!seen.count(f)) throw DataError("kfold: fold " + std::to_string(f) + " is empty");
  }
  std::vector<std::pair<DatasetManifest, DatasetManifest>> splits;
  splits.reserve(static_cast<std::size_t>(k));
  for (int f = 1; f <= k; ++f) {
    DatasetManifest train, eval;
    for (const auto& r : manifest.records) {
      (r.fold == f ? eval : train).records.push_back(r);
    }
    splits.emplace_back(std::move(train), std::move(eval));
  }
  return splits;
}

double macro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw UsageError("macro_accuracy: predictions/labels size mismatch");
  }
  if (labels.empty()) throw UsageError("macro_accuracy: empty inputs");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [correct, total] = per_class[labels[i]];
    total += 1;
    if (predictions[i] == labels[i]) correct += 1;
  }
  double sum = 0.0;
  for (const auto& [label, counts] : per_class) {
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return sum / static_cast<double>(per_class.size());
}

void append_log_csv(const std::filesystem::path& path, const std::vector<EpochRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw DataError("log: cannot write " + path.string());
  if (fresh) os << "epoch,split,loss,macro_accuracy,lr\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.8f,%.6f,%.8g\n", r.epoch, r.split.c_str(), r.loss,
                  r.macro_accuracy, r.lr);
    os << buf;
  }
  if (!os) throw DataError("log: write failed for " + path.string());
}

}  // namespace asc
