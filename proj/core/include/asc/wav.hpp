#pragma once

#include <filesystem>
#include <vector>

namespace asc {

struct WavData {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
};

// Decodes a RIFF/WAVE PCM16 file. Multi-channel input is averaged to mono;
// samples are scaled by 1/32768. Throws DataError for anything that is not
// 16-bit PCM, and for empty or malformed files.
WavData read_wav_mono(const std::filesystem::path& path);

// Writes mono PCM16. Samples are clamped to [-1, 1] and rounded.
void write_wav_mono_pcm16(const std::filesystem::path& path, const std::vector<float>& samples,
                          int sample_rate);

}  // namespace asc
