#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pftopics {

/// Base class for every domain error raised by the library. The CLI maps
/// these to exit code 1.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Precondition or contract violation on an argument.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based; 0 when no line applies.
class ParseError : public Error {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Non-finite objective or gradient. `term()` names the offending ELBO term
/// when one could be identified.
class NumericalError : public Error {
public:
  NumericalError(std::string term, const std::string& what)
      : Error(what), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

private:
  std::string term_;
};

}  // namespace pftopics
