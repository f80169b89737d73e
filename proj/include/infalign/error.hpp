#pragma once

#include <stdexcept>
#include <string>

namespace infalign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No calibration table exists for the requested prompt.
class MissingPrompt : public Error {
 public:
  using Error::Error;
};

// A reward value was NaN or infinite.
class InvalidReward : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of a transform or procedure.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or spec string. Carries a 1-based line number when
// the problem is tied to a line of an input file (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace infalign
