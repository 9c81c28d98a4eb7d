#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqdiff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A strategy was asked to initialize without the history/observation it needs.
class MissingContext : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state produced by a reverse-diffusion step.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int step)
      : NumericalError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Malformed file or text input. `position()` is a byte offset for binary
/// formats and a 1-based line number for text formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Missing or unreadable file, or a checkpoint that does not fit the model.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqdiff
