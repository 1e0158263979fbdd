#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mg {

/// Malformed external input (image files, checkpoints, config text). Carries
/// the byte offset at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : std::runtime_error(message + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid or inconsistent run configuration; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mg
