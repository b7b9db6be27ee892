#pragma once

#include <stdexcept>
#include <string>

namespace decloss {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor extents disagree (matmul inner dims, elementwise shapes, axes).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Value outside an operation's domain (log of non-positive, div by zero,
// non-finite inputs, degenerate positive/negative partitions).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition (backward twice, non-scalar root,
// patch size not dividing the image, empty input sets).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File or format problem; message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace decloss
