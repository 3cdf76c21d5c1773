#ifndef SOFTQ_ERRORS_HPP_
#define SOFTQ_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace softq {

// File or environment failure; the CLI maps this to exit code 1.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed serialized input. `line` is 1-based when known, 0 otherwise.
struct ParseError : IoError {
  ParseError(const std::string& what, int line_number)
      : IoError("line " + std::to_string(line_number) + ": " + what),
        line(line_number) {}
  explicit ParseError(const std::string& what) : IoError(what), line(0) {}
  int line;
};

// Non-finite loss or gradient; the CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace softq

#endif  // SOFTQ_ERRORS_HPP_
