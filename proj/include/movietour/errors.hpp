#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace movietour {

/// Base of every error raised by the library. The CLI maps each family to one
/// exit status (see tools/movietour.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Usage / configuration family (exit 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class UsageError : public Error {
 public:
  using Error::Error;
};
class LabelError : public Error {
 public:
  LabelError(std::size_t row, const std::string& what) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Numeric family (exit 3).
class NumericError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public NumericError {
 public:
  DivergenceError(int epoch, std::size_t batch, const std::string& what)
      : NumericError(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

// Data family (exit 2): corpus contents, images, frame lists.
class DataError : public Error {
 public:
  using Error::Error;
};
class UnknownClassError : public DataError {
 public:
  using DataError::DataError;
};
class SplitError : public DataError {
 public:
  using DataError::DataError;
};
class ImageLoadError : public DataError {
 public:
  ImageLoadError(std::string path, const std::string& what)
      : DataError(what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};
class InputError : public DataError {
 public:
  InputError(std::size_t index, const std::string& what) : DataError(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// I/O family (exit 4).
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint load failures. Each is distinct so callers can tell them apart;
// they share the I/O family for exit-status purposes except ConsistencyError,
// which is a configuration problem.
class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};
class MagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ConsistencyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace movietour
