#pragma once

#include <stdexcept>
#include <string>

namespace semsr {

/// Base class of every error raised by the library. `kind()` is a short,
/// stable token used by the command line tool to report machine-parsable
/// failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

class CheckpointError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "checkpoint"; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training"; }
};

/// A pipeline stage was invoked before the stage it depends on produced its
/// artifact.
class PrerequisiteError : public Error {
 public:
  PrerequisiteError(std::string stage, const std::string& what)
      : Error(what), stage_(std::move(stage)) {}
  const char* kind() const noexcept override { return "prerequisite"; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace semsr
