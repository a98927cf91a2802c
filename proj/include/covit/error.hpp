#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace covit {

/// Malformed input files (FASTA, labels, feature containers, checkpoints).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration, usage, or inconsistent inputs.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace covit
