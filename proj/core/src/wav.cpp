#include "asc/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "asc/error.hpp"

namespace asc {

namespace {

std::uint32_t rd_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ofstream& os, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ofstream& os, std::uint16_t v) {
  std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WavData read_wav_mono(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.empty()) throw DataError("wav: empty file " + path.string());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("wav: not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data_ptr = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_len = rd_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) {
      throw DataError("wav: truncated chunk in " + path.string());
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("wav: short fmt chunk in " + path.string());
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_ptr == nullptr) {
    throw DataError("wav: missing fmt or data chunk in " + path.string());
  }
  if (format != 1) {
    throw DataError("wav: unsupported codec (format tag " + std::to_string(format) + ") in " +
                    path.string());
  }
  if (bits != 16) {
    throw DataError("wav: unsupported bit depth " + std::to_string(bits) + " in " + path.string());
  }
  if (channels < 1) throw DataError("wav: zero channels in " + path.string());
  if (sample_rate == 0) throw DataError("wav: zero sample rate in " + path.string());
  if (data_len == 0) throw DataError("wav: empty data chunk in " + path.string());

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t n_frames = data_len / frame_bytes;
  WavData out;
  out.sample_rate = static_cast<int>(sample_rate);
  out.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) {
      std::int16_t s;
      std::memcpy(&s, data_ptr + i * frame_bytes + 2 * c, 2);
      acc += static_cast<float>(s);
    }
    out.samples[i] = acc / (32768.0f * static_cast<float>(channels));
  }
  return out;
}

void write_wav_mono_pcm16(const std::filesystem::path& path, const std::vector<float>& samples,
                          int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("wav: cannot write " + path.string());
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1);  // PCM
  wr_u16(os, 1);  // mono
  wr_u32(os, static_cast<std::uint32_t>(sample_rate));
  wr_u32(os, static_cast<std::uint32_t>(sample_rate) * 2);
  wr_u16(os, 2);   // block align
  wr_u16(os, 16);  // bits
  os.write("data", 4);
  wr_u32(os, data_len);
  for (float v : samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    const int s = static_cast<int>(std::lround(c * 32767.0f));
    const auto s16 = static_cast<std::int16_t>(std::clamp(s, -32768, 32767));
    os.write(reinterpret_cast<const char*>(&s16), 2);
  }
  if (!os) throw DataError("wav: write failed for " + path.string());
}

}  // namespace asc
