#pragma once

#include <stdexcept>
#include <string>

namespace hatebm {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or network shapes disagree with a contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid or unknown configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity surfaced in an energy, gradient, or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem, decode, and checkpoint failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (e.g. z-gradient on a
// conditional energy, zero-norm latent passed to the sphere projection).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace hatebm
