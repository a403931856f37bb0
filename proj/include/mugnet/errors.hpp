#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mugnet {

// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Empty reduction extents and similar math-domain violations.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (wrong row count, missing labels, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad numeric parameter (k > N, batch size 0, empty recipe, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model / training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that parses but violates an invariant (label >= C, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}

  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace mugnet
