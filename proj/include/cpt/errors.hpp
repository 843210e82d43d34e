#pragma once

#include <cstddef>
#include <iostream>
#include <stdexcept>
#include <string>

namespace cpt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class EmptyBatchError : public Error {
 public:
  EmptyBatchError() : Error("empty batch") {}
  using Error::Error;
};

class EmptyBundleError : public Error {
 public:
  EmptyBundleError() : Error("gradient bundle has no objectives") {}
};

// Raised when a loss or gradient turns non-finite during training.
class NumericalError : public Error {
 public:
  NumericalError(std::size_t step, const std::string& what)
      : Error("non-finite value at step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

namespace detail {

using WarningHandler = void (*)(const std::string&);

inline void default_warning_handler(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

inline WarningHandler& warning_handler() {
  static WarningHandler handler = &default_warning_handler;
  return handler;
}

inline void warn(const std::string& msg) {
  if (auto h = warning_handler()) h(msg);
}

}  // namespace detail

// Pass nullptr to silence warnings (used by tests and the sweep workers).
inline void set_warning_handler(detail::WarningHandler handler) { detail::warning_handler() = handler; }

}  // namespace cpt
