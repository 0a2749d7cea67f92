#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssdas {

// Invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or inconsistent dataset / artifact files (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk format. Carries the byte offset where parsing failed.
class FormatError : public DataError {
 public:
  FormatError(const std::string& path, std::size_t byte_offset, const std::string& msg)
      : DataError(path + ": " + msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// NaN/Inf detected in a loss or parameter (CLI exit code 4).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ssdas
