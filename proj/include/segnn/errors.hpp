#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed XML input. offset is the byte position of the offending character.
class XmlParseError : public Error {
 public:
  XmlParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Training or fitting on data that holds only one class.
class SingleClassError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class AutodiffError : public Error {
 public:
  using Error::Error;
};

// Binary artifact errors (graph records, embedding files, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DuplicateKeyError : public FormatError {
 public:
  using FormatError::FormatError;
};

class MissingEmbedding : public Error {
 public:
  explicit MissingEmbedding(const std::string& key)
      : Error("no embedding for node key '" + key + "'"), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace segnn
