#pragma once

#include <stdexcept>
#include <string>

namespace asc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// NaN or Inf surfaced by a forward op, or a diverging loss.
struct NumericError : Error {
  using Error::Error;
};

// Bad input data: files, manifests, binary formats.
struct DataError : Error {
  using Error::Error;
};

// Bad configuration or command-line usage.
struct UsageError : Error {
  using Error::Error;
};

// Categorized failures from the binary model loader.
struct ModelFormatError : DataError {
  enum class Kind { bad_magic, bad_version, truncated, corrupt, checksum_mismatch };

  ModelFormatError(Kind k, const std::string& msg) : DataError(msg), kind(k) {}

  Kind kind;
};

inline const char* to_string(ModelFormatError::Kind k) {
  switch (k) {
    case ModelFormatError::Kind::bad_magic: return "bad magic";
    case ModelFormatError::Kind::bad_version: return "bad version";
    case ModelFormatError::Kind::truncated: return "truncated";
    case ModelFormatError::Kind::corrupt: return "corrupt";
    case ModelFormatError::Kind::checksum_mismatch: return "checksum mismatch";
  }
  return "unknown";
}

}  // namespace asc
