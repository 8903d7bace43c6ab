#pragma once

#include <stdexcept>
#include <string>

namespace volcal {

// Root of every error the library raises. Subclasses map onto the CLI exit
// codes (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: config keys, CLI flags, out-of-range parameters. Exit 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A required file or upstream stage output is absent. Exit 3.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

class MissingFileError : public MissingArtifactError {
 public:
  using MissingArtifactError::MissingArtifactError;
};

// An artifact exists but its contents violate the format contract. Exit 3.
class FormatError : public Error {
 public:
  using Error::Error;
};

class SizeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownDtypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

class InvalidLabelError : public FormatError {
 public:
  InvalidLabelError(std::size_t voxel, int label);
  std::size_t voxel() const { return voxel_; }
  int label() const { return label_; }

 private:
  std::size_t voxel_;
  int label_;
};

// Non-finite values, diverged training, degenerate fits. Exit 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

int exit_code_for(const std::exception& e);

}  // namespace volcal
