#pragma once

#include <stdexcept>
#include <string>

namespace raresynth {

// Error categories used by the CLI exit-code mapping:
//   std::invalid_argument -> "invalid-argument"
//   IoError               -> "io"
//   FormatError           -> "format"
//   anything else         -> "internal"

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace raresynth
