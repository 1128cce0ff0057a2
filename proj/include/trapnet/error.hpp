#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trapnet {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Cosine similarity against a zero vector, or a zero signature.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, const std::string& path)
      : Error(what + ": " + path), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Artifacts that were derived from different model checkpoints.
class HashMismatchError : public Error {
 public:
  using Error::Error;
};

/// A signature-free attack was configured to read the defender's signature.
class IsolationError : public Error {
 public:
  using Error::Error;
};

}  // namespace trapnet
