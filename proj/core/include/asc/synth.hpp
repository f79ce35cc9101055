#pragma once

#include <cstdint>
#include <filesystem>

#include "asc/manifest.hpp"

namespace asc {

// Seeded synthetic corpus: each scene is a mixture of characteristic "event"
// components (a tone chord plus a filtered noise band) that switch on and
// off over the clip, so scene identity is carried by which events occur.
struct SynthConfig {
  int n_scenes = 3;
  int clips_per_scene = 8;
  int folds = 4;
  double min_seconds = 1.0;
  double max_seconds = 3.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Writes `sceneNN_clipMM.wav` files plus `manifest.csv` under out_dir and
// returns the manifest. Identical seeds produce byte-identical corpora.
DatasetManifest synthesize_corpus(const std::filesystem::path& out_dir, const SynthConfig& cfg);

}  // namespace asc
