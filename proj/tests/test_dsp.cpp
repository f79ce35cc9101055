#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "asc/dsp.hpp"
#include "asc/error.hpp"
#include "asc/wav.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace asc;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("asckit_dsp_" + name);
}

std::vector<float> sine(double freq_hz, double seconds, double rate) {
  std::vector<float> s(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * freq_hz *
                                             static_cast<double>(i) / rate));
  }
  return s;
}

}  // namespace

TEST_CASE("wav: fixture round trip and scale convention") {
  const auto path = temp_file("fixture.wav");
  write_wav_mono_pcm16(path, {0.0f, 0.25f, -0.5f}, 16000);
  const WavData back = read_wav_mono(path);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == 3);
  CHECK(back.samples[0] == doctest::Approx(0.0f));
  CHECK(back.samples[1] == doctest::Approx(0.25f).epsilon(1e-3));
  CHECK(back.samples[2] == doctest::Approx(-0.5f).epsilon(1e-3));

  // Full-scale square wave: 0x7FFF -> ~1.0, 0x8000 -> -1.0.
  const auto sq_path = temp_file("square.wav");
  {
    std::ofstream os(sq_path, std::ios::binary);
    const std::uint8_t header[44] = {'R', 'I', 'F', 'F', 40, 0,   0,   0,   'W', 'A', 'V', 'E',
                                     'f', 'm', 't', ' ', 16, 0,   0,   0,   1,   0,   1,   0,
                                     0x80, 0x3e, 0,  0,   0,  0x7d, 0,  0,   2,   0,   16,  0,
                                     'd', 'a', 't', 'a', 4,  0,   0,   0};
    os.write(reinterpret_cast<const char*>(header), 44);
    const std::int16_t data[2] = {0x7fff, static_cast<std::int16_t>(-0x8000)};
    os.write(reinterpret_cast<const char*>(data), 4);
  }
  const WavData sq = read_wav_mono(sq_path);
  REQUIRE(sq.samples.size() == 2);
  CHECK(sq.samples[0] == doctest::Approx(1.0f).epsilon(1e-4));
  CHECK(sq.samples[1] == doctest::Approx(-1.0f));
}

TEST_CASE("wav: all-zero pcm decodes to a zero vector") {
  const auto path = temp_file("zeros.wav");
  write_wav_mono_pcm16(path, std::vector<float>(256, 0.0f), 8000);
  const WavData back = read_wav_mono(path);
  for (float v : back.samples) CHECK(v == 0.0f);
}

TEST_CASE("wav: error paths") {
  const auto empty = temp_file("empty.wav");
  { std::ofstream os(empty, std::ios::binary); }
  CHECK_THROWS_AS(read_wav_mono(empty), DataError);
  CHECK_THROWS_AS(read_wav_mono(temp_file("missing_file.wav")), DataError);

  // 8-bit files are an unsupported bit depth.
  const auto bad_bits = temp_file("bad_bits.wav");
  {
    std::ofstream os(bad_bits, std::ios::binary);
    std::uint8_t header[44] = {'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E',
                               'f', 'm', 't', ' ', 16, 0, 0, 0, 1,   0,   1,   0,
                               0x80, 0x3e, 0, 0, 0, 0x7d, 0, 0, 1,   0,   8,   0,
                               'd', 'a', 't', 'a', 4,  0, 0, 0};
    os.write(reinterpret_cast<const char*>(header), 44);
    const std::uint8_t data[4] = {0, 0, 0, 0};
    os.write(reinterpret_cast<const char*>(data), 4);
  }
  CHECK_THROWS_AS(read_wav_mono(bad_bits), DataError);
}

TEST_CASE("resample_linear: identity, constants, and a 1 kHz sine") {
  const std::vector<float> s = {1, 2, 3, 4};
  CHECK(resample_linear(s, 16000, 16000) == s);

  const std::vector<float> c(1000, 0.7f);
  for (float v : resample_linear(c, 48000, 16000)) CHECK(v == doctest::Approx(0.7f));

  const std::vector<float> tone = sine(1000.0, 0.25, 48000.0);
  const std::vector<float> down = resample_linear(tone, 48000, 16000);
  // Correlation with the analytic 1 kHz sine at 16 kHz.
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < down.size(); ++i) {
    const double ref = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(i) / 16000.0);
    dot += down[i] * ref;
    na += down[i] * down[i];
    nb += ref * ref;
  }
  CHECK(dot / std::sqrt(na * nb) > 0.999);
  CHECK_THROWS_AS(resample_linear(s, 0, 16000), UsageError);
}

TEST_CASE("stft_power: zeros, DC concentration, bin-center sine") {
  LogMelConfig cfg;
  const std::size_t frame = static_cast<std::size_t>(cfg.frame_samples());
  CHECK(frame == 400);
  CHECK(cfg.fft_size() == 512);

  const Tensor<float> zeros = stft_power(std::vector<float>(4000, 0.0f), cfg);
  for (float v : *zeros.data) CHECK(v == 0.0f);

  const Tensor<float> dc = stft_power(std::vector<float>(4000, 0.5f), cfg);
  for (std::size_t t = 0; t < dc.dim(0); ++t) {
    double row = 0.0, bin0 = static_cast<double>((*dc.data)[t * dc.dim(1)]);
    for (std::size_t k = 0; k < dc.dim(1); ++k) row += (*dc.data)[t * dc.dim(1) + k];
    CHECK(bin0 / row > 0.99);
  }

  // Sine exactly on a bin center: f = k0 * sr / fft_size.
  const int k0 = 40;
  const double f = k0 * cfg.sample_rate_hz / cfg.fft_size();
  const Tensor<float> spec = stft_power(sine(f, 0.3, cfg.sample_rate_hz), cfg);
  for (std::size_t t = 0; t < spec.dim(0); ++t) {
    std::size_t peak = 0;
    for (std::size_t k = 1; k < spec.dim(1); ++k) {
      if ((*spec.data)[t * spec.dim(1) + k] > (*spec.data)[t * spec.dim(1) + peak]) peak = k;
    }
    CHECK(peak == static_cast<std::size_t>(k0));
  }

  CHECK_THROWS_AS(stft_power(std::vector<float>(100, 0.0f), cfg), DataError);
}

TEST_CASE("frame_count formula holds for random lengths") {
  LogMelConfig cfg;
  Rng rng = make_rng(21);
  for (int i = 0; i < 30; ++i) {
    const std::size_t n = 400 + static_cast<std::size_t>(uniform_int(rng, 0, 20000));
    const Tensor<float> spec = stft_power(std::vector<float>(n, 0.1f), cfg);
    CHECK(spec.dim(0) == 1 + (n - 400) / 160);
    CHECK(spec.dim(0) == frame_count(n, cfg));
  }
}

TEST_CASE("mel_filterbank: nonnegative, positive mass, oracle centers") {
  LogMelConfig cfg;
  const Tensor<float> fb = mel_filterbank(cfg);
  CHECK(fb.shape == Shape{257, 64});
  for (float v : *fb.data) CHECK(v >= 0.0f);
  for (std::size_t m = 0; m < 64; ++m) {
    double mass = 0.0;
    for (std::size_t k = 0; k < 257; ++k) mass += (*fb.data)[k * 64 + m];
    CHECK(mass > 0.0);
  }

  const std::vector<double> centers = mel_center_frequencies(cfg);
  REQUIRE(centers.size() == 64);
  const double mel_lo = oracle::mel_of_hz(0.0);
  const double mel_hi = oracle::mel_of_hz(8000.0);
  for (std::size_t m = 0; m < centers.size(); ++m) {
    if (m > 0) CHECK(centers[m] > centers[m - 1]);
    const double expect =
        oracle::hz_of_mel(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m + 1) / 65.0);
    CHECK(std::abs(centers[m] - expect) < 0.1);
  }

  LogMelConfig too_many = cfg;
  too_many.n_mels = 300;
  CHECK_THROWS_AS(mel_filterbank(too_many), UsageError);
}

TEST_CASE("log_mel: silence floor, loudness monotonicity, exact composition") {
  LogMelConfig cfg;
  const FeatureMatrix silence = log_mel(std::vector<float>(3200, 0.0f), cfg);
  for (float v : *silence.frames.data) {
    CHECK(v == doctest::Approx(std::log(cfg.log_floor)));
  }

  Rng rng = make_rng(22);
  std::vector<float> noise(4800);
  for (auto& v : noise) v = static_cast<float>(uniform<double>(rng, -0.05, 0.05));
  std::vector<float> louder(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i) louder[i] = noise[i] * 10.0f;
  const FeatureMatrix quiet_fm = log_mel(noise, cfg);
  const FeatureMatrix loud_fm = log_mel(louder, cfg);
  for (std::size_t i = 0; i < quiet_fm.frames.size(); ++i) {
    CHECK((*loud_fm.frames.data)[i] >= (*quiet_fm.frames.data)[i]);
  }

  // Composition oracle: public stft_power x mel_filterbank, double
  // accumulation over bins in ascending order, then log with the floor.
  const Tensor<float> power = stft_power(noise, cfg);
  const Tensor<float> fbank = mel_filterbank(cfg);
  for (std::size_t t = 0; t < power.dim(0); ++t) {
    for (std::size_t m = 0; m < 64; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < power.dim(1); ++k) {
        acc += static_cast<double>((*power.data)[t * power.dim(1) + k]) *
               static_cast<double>((*fbank.data)[k * 64 + m]);
      }
      const float expect = static_cast<float>(std::log(std::max(acc, cfg.log_floor)));
      CHECK((*quiet_fm.frames.data)[t * 64 + m] == expect);
    }
  }

  // Determinism: identical bytes in, identical features out.
  const FeatureMatrix again = log_mel(noise, cfg);
  CHECK(*again.frames.data == *quiet_fm.frames.data);
}

TEST_CASE("feature cache round trip and validation") {
  LogMelConfig cfg;
  Rng rng = make_rng(23);
  std::vector<float> noise(3200);
  for (auto& v : noise) v = static_cast<float>(uniform<double>(rng, -0.1, 0.1));
  const FeatureMatrix fm = log_mel(noise, cfg);

  const auto path = temp_file("cache.ascf");
  write_feature_cache(path, fm);
  const FeatureMatrix back = read_feature_cache(path);
  CHECK(back.frames.shape == fm.frames.shape);
  CHECK(*back.frames.data == *fm.frames.data);

  const auto bad = temp_file("bad.ascf");
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(read_feature_cache(bad), DataError);
}

TEST_CASE("log-mel config validation and hashing") {
  LogMelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  LogMelConfig other = cfg;
  other.hop_ms = 15.0;
  CHECK(cfg.hash() != other.hash());

  LogMelConfig bad = cfg;
  bad.hop_ms = 30.0;  // hop > frame
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = cfg;
  bad.fmin_hz = 9000.0;  // fmin >= fmax
  CHECK_THROWS_AS(bad.validate(), UsageError);
}
