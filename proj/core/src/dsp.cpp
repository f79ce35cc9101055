#include "asc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "asc/error.hpp"

namespace asc {

namespace {

constexpr double kPi = std::numbers::pi_v<double>;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

void wr_u32(std::ofstream& os, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t rd_u32_at(const std::vector<std::uint8_t>& b, std::size_t pos) {
  return static_cast<std::uint32_t>(b[pos]) | (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 3]) << 24);
}

constexpr std::uint32_t kFeatureCacheVersion = 1;

}  // namespace

int LogMelConfig::frame_samples() const {
  return static_cast<int>(std::lround(sample_rate_hz * frame_len_ms / 1000.0));
}

int LogMelConfig::hop_samples() const {
  return static_cast<int>(std::lround(sample_rate_hz * hop_ms / 1000.0));
}

int LogMelConfig::fft_size() const {
  int n = 1;
  while (n < frame_samples()) n <<= 1;
  return n;
}

double LogMelConfig::fmax_or_nyquist() const {
  return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0;
}

void LogMelConfig::validate() const {
  if (sample_rate_hz <= 0.0) throw UsageError("features: sample_rate must be positive");
  if (frame_len_ms <= 0.0 || hop_ms <= 0.0) throw UsageError("features: frame/hop must be positive");
  if (hop_ms > frame_len_ms) throw UsageError("features: hop must not exceed frame length");
  if (n_mels < 1) throw UsageError("features: n_mels must be >= 1");
  if (log_floor <= 0.0) throw UsageError("features: log_floor must be positive");
  const double fmax = fmax_or_nyquist();
  if (!(fmin_hz < fmax) || fmax > sample_rate_hz / 2.0 + 1e-9) {
    throw UsageError("features: need fmin < fmax <= sample_rate/2");
  }
}

std::uint64_t LogMelConfig::hash() const {
  // FNV-1a over the canonical field string.
  char buf[256];
  std::snprintf(buf, sizeof(buf), "sr=%.6f;frame=%.6f;hop=%.6f;mels=%d;floor=%.3e;fmin=%.6f;fmax=%.6f",
                sample_rate_hz, frame_len_ms, hop_ms, n_mels, log_floor, fmin_hz, fmax_hz);
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<std::uint8_t>(*p);
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t frame_count(std::size_t num_samples, const LogMelConfig& cfg) {
  const std::size_t frame = static_cast<std::size_t>(cfg.frame_samples());
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples());
  if (num_samples < frame) {
    throw DataError("features: signal shorter than one frame (" + std::to_string(num_samples) +
                    " < " + std::to_string(frame) + " samples)");
  }
  return 1 + (num_samples - frame) / hop;
}

std::vector<float> resample_linear(const std::vector<float>& samples, double from_hz, double to_hz) {
  if (from_hz <= 0.0 || to_hz <= 0.0) throw UsageError("resample: rates must be positive");
  if (from_hz == to_hz || samples.empty()) return samples;
  const double ratio = from_hz / to_hz;
  const std::size_t n_out = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) * to_hz / from_hz)));
  std::vector<float> out(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= samples.size() - 1) {
      out[i] = samples.back();
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out[i] = static_cast<float>((1.0 - frac) * samples[i0] + frac * samples[i0 + 1]);
  }
  return out;
}

Tensor<float> stft_power(const std::vector<float>& samples, const LogMelConfig& cfg) {
  cfg.validate();
  const std::size_t frame = static_cast<std::size_t>(cfg.frame_samples());
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples());
  const std::size_t n_frames = frame_count(samples.size(), cfg);
  const std::size_t nfft = static_cast<std::size_t>(cfg.fft_size());
  const std::size_t n_bins = nfft / 2 + 1;

  // Periodic Hann window.
  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(frame));
  }

  Tensor<float> out = Tensor<float>::zeros({n_frames, n_bins});
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < frame; ++i) {
      buf[i] = std::complex<double>(static_cast<double>(samples[start + i]) * window[i], 0.0);
    }
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(frame), buf.end(),
              std::complex<double>(0.0, 0.0));
    fft_radix2(buf);
    float* row = out.ptr() + t * n_bins;
    for (std::size_t k = 0; k < n_bins; ++k) {
      row[k] = static_cast<float>(std::norm(buf[k]));
    }
  }
  ensure_all_finite(out, "stft_power");
  return out;
}

std::vector<double> mel_center_frequencies(const LogMelConfig& cfg) {
  cfg.validate();
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_or_nyquist());
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  // n_mels + 2 uniform mel edge points; centers are the interior ones.
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(m + 1) /
                                    static_cast<double>(cfg.n_mels + 1);
    centers[static_cast<std::size_t>(m)] = mel_to_hz(mel);
  }
  return centers;
}

Tensor<float> mel_filterbank(const LogMelConfig& cfg) {
  cfg.validate();
  const int nfft = cfg.fft_size();
  const int n_bins = cfg.n_bins();
  const int n_mels = cfg.n_mels;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_or_nyquist());
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    edges[static_cast<std::size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  }

  Tensor<float> fb = Tensor<float>::zeros({static_cast<std::size_t>(n_bins),
                                           static_cast<std::size_t>(n_mels)});
  for (int k = 0; k < n_bins; ++k) {
    const double f = static_cast<double>(k) * cfg.sample_rate_hz / static_cast<double>(nfft);
    for (int m = 0; m < n_mels; ++m) {
      const double left = edges[static_cast<std::size_t>(m)];
      const double center = edges[static_cast<std::size_t>(m) + 1];
      const double right = edges[static_cast<std::size_t>(m) + 2];
      double wgt = 0.0;
      if (f > left && f < right) {
        wgt = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      }
      (*fb.data)[static_cast<std::size_t>(k) * static_cast<std::size_t>(n_mels) +
                 static_cast<std::size_t>(m)] = static_cast<float>(wgt);
    }
  }

  for (int m = 0; m < n_mels; ++m) {
    double mass = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      mass += (*fb.data)[static_cast<std::size_t>(k) * static_cast<std::size_t>(n_mels) +
                         static_cast<std::size_t>(m)];
    }
    if (mass <= 0.0) {
      throw UsageError("features: mel filter " + std::to_string(m) +
                       " is empty; n_mels too large for fft resolution");
    }
  }
  return fb;
}

FeatureMatrix log_mel(const std::vector<float>& samples, const LogMelConfig& cfg) {
  const Tensor<float> power = stft_power(samples, cfg);
  const Tensor<float> fb = mel_filterbank(cfg);
  const std::size_t n_frames = power.dim(0);
  const std::size_t n_bins = power.dim(1);
  const std::size_t n_mels = fb.dim(1);

  FeatureMatrix fm;
  fm.frames = Tensor<float>::zeros({n_frames, n_mels});
  fm.config_hash = cfg.hash();
  for (std::size_t t = 0; t < n_frames; ++t) {
    const float* prow = power.ptr() + t * n_bins;
    float* orow = fm.frames.ptr() + t * n_mels;
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) {
        acc += static_cast<double>(prow[k]) * static_cast<double>((*fb.data)[k * n_mels + m]);
      }
      orow[m] = static_cast<float>(std::log(std::max(acc, cfg.log_floor)));
    }
  }
  ensure_all_finite(fm.frames, "log_mel");
  return fm;
}

void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("feature cache: cannot write " + path.string());
  os.write("ASCF", 4);
  wr_u32(os, kFeatureCacheVersion);
  wr_u32(os, static_cast<std::uint32_t>(features.frames.dim(0)));
  wr_u32(os, static_cast<std::uint32_t>(features.frames.dim(1)));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(features.frames.ptr()),
           static_cast<std::streamsize>(features.frames.size() * 4));
  if (!os) throw DataError("feature cache: write failed for " + path.string());
}

FeatureMatrix read_feature_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("feature cache: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "ASCF", 4) != 0) {
    throw DataError("feature cache: bad magic in " + path.string());
  }
  const std::uint32_t version = rd_u32_at(bytes, 4);
  if (version != kFeatureCacheVersion) {
    throw DataError("feature cache: unsupported version " + std::to_string(version));
  }
  const std::uint32_t t = rd_u32_at(bytes, 8);
  const std::uint32_t m = rd_u32_at(bytes, 12);
  const std::size_t expect = 16 + static_cast<std::size_t>(t) * m * 4;
  if (bytes.size() != expect) {
    throw DataError("feature cache: size mismatch in " + path.string());
  }
  FeatureMatrix fm;
  fm.frames = Tensor<float>::zeros({t, m});
  std::memcpy(fm.frames.ptr(), bytes.data() + 16, static_cast<std::size_t>(t) * m * 4);
  fm.source = path.string();
  ensure_all_finite(fm.frames, "feature cache");
  return fm;
}

}  // namespace asc
