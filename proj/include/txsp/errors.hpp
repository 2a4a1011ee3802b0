#pragma once

#include <stdexcept>
#include <string>

namespace txsp {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a tape is used again after backward() consumed it.
class StaleTapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checksum or framing mismatch while reading a checkpoint.
class IntegrityError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace txsp
