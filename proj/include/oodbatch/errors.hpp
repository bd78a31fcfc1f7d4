#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oodbatch {

/// Invalid configuration or precondition detected before any work starts.
/// The CLI maps this to exit status 2.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed manifest / pack / checkpoint input. `line()` is 0 for binary files.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + ", line " + std::to_string(line) : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace oodbatch
