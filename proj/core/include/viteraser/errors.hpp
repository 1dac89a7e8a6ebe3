#pragma once

#include <stdexcept>
#include <string>

namespace viteraser {

// Base of every error the library throws on a broken precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnknownPresetError : public ConfigError {
 public:
  explicit UnknownPresetError(const std::string& name)
      : ConfigError("unknown preset: '" + name + "'") {}
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(const std::string& term)
      : Error("non-finite loss term: " + term), term_(term) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace viteraser
