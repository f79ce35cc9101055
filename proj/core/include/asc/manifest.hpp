#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace asc {

struct ManifestRecord {
  std::string path;
  std::string scene;
  int fold = 0;
};

// Clip list driving training and evaluation. CSV on disk with the header
// `path,scene,fold`. The class vocabulary is the sorted set of distinct
// scene labels, which keeps label indices stable across save/load.
struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::vector<std::string> vocabulary() const;
  int label_index(const std::string& scene) const;  // index into vocabulary()
  void validate() const;                            // unique paths, folds >= 1

  static DatasetManifest load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
};

}  // namespace asc
