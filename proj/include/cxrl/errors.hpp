#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cxrl {

// Failure to read or write a file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data. `line` is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Remote model service failure. Transient failures are retried by clients;
// whatever escapes a client is reported with `permanent() == true`.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(const std::string& what, bool permanent) : std::runtime_error(what), permanent_(permanent) {}

  bool permanent() const { return permanent_; }

 private:
  bool permanent_;
};

}  // namespace cxrl
