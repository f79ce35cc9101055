#include "asc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "asc/error.hpp"
#include "asc/rng.hpp"
#include "asc/wav.hpp"

namespace asc {

namespace {

constexpr double kPi = std::numbers::pi_v<double>;

// RBJ-style biquad bandpass (constant peak gain).
struct Bandpass {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Bandpass(double center_hz, double q, double sample_rate) {
    const double w0 = 2.0 * kPi * center_hz / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b1 = 0.0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Piecewise on/off activity envelope: 1-3 active stretches covering at least
// half of the clip, with short linear ramps at the edges.
std::vector<float> activity_envelope(Rng& rng, std::size_t n, int sample_rate) {
  std::vector<float> env(n, 0.0f);
  const int n_spans = static_cast<int>(uniform_int(rng, 1, 3));
  const std::size_t ramp = static_cast<std::size_t>(sample_rate / 100);  // 10 ms
  for (int s = 0; s < n_spans; ++s) {
    const double c0 = uniform<double>(rng, 0.0, 0.6);
    const double c1 = c0 + uniform<double>(rng, 0.3, 0.4 + 0.6 * (1.0 - c0));
    const std::size_t i0 = static_cast<std::size_t>(c0 * static_cast<double>(n));
    const std::size_t i1 = std::min(n, static_cast<std::size_t>(c1 * static_cast<double>(n)));
    for (std::size_t i = i0; i < i1; ++i) {
      float g = 1.0f;
      if (i - i0 < ramp) g = static_cast<float>(i - i0) / static_cast<float>(ramp);
      if (i1 - i <= ramp) g = std::min(g, static_cast<float>(i1 - i) / static_cast<float>(ramp));
      env[i] = std::max(env[i], g);
    }
  }
  return env;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_scenes < 2) throw UsageError("synth: need at least 2 scenes");
  if (clips_per_scene < 1) throw UsageError("synth: clips_per_scene must be >= 1");
  if (folds < 1) throw UsageError("synth: folds must be >= 1");
  if (clips_per_scene < folds) {
    throw UsageError("synth: clips_per_scene must be >= folds so every fold is non-empty");
  }
  if (min_seconds < 0.1 || max_seconds > 10.0 || min_seconds > max_seconds) {
    throw UsageError("synth: clip length range must satisfy 0.1 <= min <= max <= 10 seconds");
  }
  if (sample_rate < 8000) throw UsageError("synth: sample_rate must be >= 8000");
}

DatasetManifest synthesize_corpus(const std::filesystem::path& out_dir, const SynthConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  Rng rng = make_rng(cfg.seed);
  DatasetManifest manifest;

  const double nyquist = cfg.sample_rate / 2.0;
  for (int scene = 0; scene < cfg.n_scenes; ++scene) {
    // Scene recipe: a 3-note chord and a noise band at scene-specific spots.
    const double f0 = 160.0 + 130.0 * scene;
    const double chord[3] = {f0, f0 * 1.5, f0 * 2.3};
    const double band_center = std::min(nyquist * 0.85, 700.0 + 620.0 * scene);

    for (int clip = 0; clip < cfg.clips_per_scene; ++clip) {
      const double seconds = uniform<double>(rng, cfg.min_seconds, cfg.max_seconds);
      const std::size_t n = static_cast<std::size_t>(seconds * cfg.sample_rate);
      std::vector<float> mix(n, 0.0f);

      // Tone-chord event.
      {
        const std::vector<float> env = activity_envelope(rng, n, cfg.sample_rate);
        const double amp = uniform<double>(rng, 0.18, 0.32);
        for (double base : chord) {
          const double detune = uniform<double>(rng, 0.99, 1.01);
          const double phase = uniform<double>(rng, 0.0, 2.0 * kPi);
          const double w = 2.0 * kPi * std::min(base * detune, nyquist * 0.95) / cfg.sample_rate;
          for (std::size_t i = 0; i < n; ++i) {
            mix[i] += static_cast<float>(amp * env[i] * std::sin(w * static_cast<double>(i) + phase));
          }
        }
      }

      // Filtered-noise event.
      {
        const std::vector<float> env = activity_envelope(rng, n, cfg.sample_rate);
        const double amp = uniform<double>(rng, 0.25, 0.45);
        Bandpass bp(band_center, 4.0, cfg.sample_rate);
        for (std::size_t i = 0; i < n; ++i) {
          const double white = uniform<double>(rng, -1.0, 1.0);
          mix[i] += static_cast<float>(amp * env[i] * bp.step(white) * 3.0);
        }
      }

      // Common broadband floor so silence never identifies a scene.
      for (std::size_t i = 0; i < n; ++i) {
        mix[i] += static_cast<float>(uniform<double>(rng, -0.02, 0.02));
      }

      float peak = 0.0f;
      for (float v : mix) peak = std::max(peak, std::abs(v));
      if (peak > 0.0f) {
        const float norm = 0.7f / peak;
        for (auto& v : mix) v *= norm;
      }

      char name[64];
      std::snprintf(name, sizeof(name), "scene%02d_clip%02d.wav", scene, clip);
      const std::filesystem::path wav_path = out_dir / name;
      write_wav_mono_pcm16(wav_path, mix, cfg.sample_rate);

      char scene_name[32];
      std::snprintf(scene_name, sizeof(scene_name), "scene%02d", scene);
      manifest.records.push_back(
          ManifestRecord{wav_path.string(), scene_name, clip % cfg.folds + 1});
    }
  }

  manifest.save_csv(out_dir / "manifest.csv");
  return manifest;
}

}  // namespace asc
