#pragma once

#include <stdexcept>
#include <string>

namespace blockforge {

// Every error raised by the library derives from Error so callers can catch
// the whole family at a tool boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidShape : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  using Error::Error;
};

class IllegalAction : public Error {
 public:
  using Error::Error;
};

class TaskParseError : public Error {
 public:
  TaskParseError(const std::string& path, int line, const std::string& field,
                 const std::string& message)
      : Error(path + ":" + std::to_string(line) + ": " +
              (field.empty() ? std::string() : "field '" + field + "': ") + message),
        line_(line),
        field_(field) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalDivergence : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace blockforge
