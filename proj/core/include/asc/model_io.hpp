#pragma once

#include <filesystem>
#include <string>

#include "asc/model.hpp"

namespace asc {

// Canonical JSON for the spec header (keys sorted, UTF-8, no whitespace).
std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& json_text);

// Model container ("ASCM"): magic, version u32 LE, length-prefixed canonical
// spec header (which also carries a CRC32 of the parameter payload), then
// parameters in sorted-name order as (name length + bytes, rank u32,
// dims u32 LE, raw little-endian f32 data).
//
// The loader is total: any truncation or corruption raises a
// ModelFormatError with a specific category, never a partial model.
void save_model(const std::filesystem::path& path, const Model<float>& model);
Model<float> load_model(const std::filesystem::path& path);

constexpr std::uint32_t kModelFormatVersion = 1;

// CRC32 (IEEE, reflected) used by the model container.
std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len);

}  // namespace asc
