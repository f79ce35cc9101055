#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asc/tensor.hpp"

namespace asc {

// Log-mel front end parameters. Defaults follow the usual 16 kHz mel setup:
// 25 ms frames, 10 ms hop, 64 mel bins spanning DC to Nyquist.
struct LogMelConfig {
  double sample_rate_hz = 16000.0;
  double frame_len_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 64;
  double log_floor = 1e-10;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // 0 means sample_rate/2

  int frame_samples() const;
  int hop_samples() const;
  int fft_size() const;  // next power of two >= frame_samples()
  int n_bins() const { return fft_size() / 2 + 1; }
  double fmax_or_nyquist() const;
  void validate() const;
  std::uint64_t hash() const;  // stable across runs; keys the feature cache
};

// The [T, n_mels] matrix every model consumes.
struct FeatureMatrix {
  Tensor<float> frames;
  std::string source;
  std::uint64_t config_hash = 0;
};

// Number of analysis frames for a signal of `num_samples`:
// 1 + floor((num_samples - frame) / hop), valid when num_samples >= frame.
std::size_t frame_count(std::size_t num_samples, const LogMelConfig& cfg);

// Linear-interpolation resampler; identity when the rates match.
std::vector<float> resample_linear(const std::vector<float>& samples, double from_hz, double to_hz);

// Hann-windowed frame power spectra |FFT|^2, shape [T, fft_size/2+1].
Tensor<float> stft_power(const std::vector<float>& samples, const LogMelConfig& cfg);

// Triangular mel filterbank [fft_size/2+1, n_mels]; centers uniform on the
// mel scale mel(f) = 2595*log10(1 + f/700) between fmin and fmax.
Tensor<float> mel_filterbank(const LogMelConfig& cfg);

// Mel filter center frequencies in Hz (n_mels entries).
std::vector<double> mel_center_frequencies(const LogMelConfig& cfg);

// log(max(power * filterbank, log_floor)). The product accumulates in double
// over FFT bins in ascending order; callers composing stft_power and
// mel_filterbank the same way reproduce it exactly.
FeatureMatrix log_mel(const std::vector<float>& samples, const LogMelConfig& cfg);

// Feature cache ("ASCF"): magic, version u32 LE, T u32, n_mels u32, then
// T*n_mels little-endian f32.
void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_cache(const std::filesystem::path& path);

}  // namespace asc
