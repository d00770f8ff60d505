#pragma once

#include <stdexcept>
#include <string>

namespace jitter {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A precondition on a scalar argument or configuration value failed.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Rejection sampling could not land inside the truncation interval.
class DegenerateTruncation : public Error {
public:
  using Error::Error;
};

/// Training produced a NaN/Inf loss.
class NonFiniteLoss : public Error {
public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch)),
        epoch_(epoch), batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

private:
  std::size_t epoch_;
  std::size_t batch_;
};

// IDX parse failures, one type per failure mode.
class IdxError : public Error {
public:
  using Error::Error;
};
class IdxBadMagic : public IdxError {
public:
  using IdxError::IdxError;
};
class IdxTruncated : public IdxError {
public:
  using IdxError::IdxError;
};
class IdxCountMismatch : public IdxError {
public:
  using IdxError::IdxError;
};

/// Malformed or semantically invalid configuration file.
class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace jitter
