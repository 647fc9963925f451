// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lusifer {

// Error taxonomy maps onto CLI exit codes: usage=1, data=2, numeric=3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or missing input data: files, datasets, checkpoints, shape mismatches
// caused by inconsistent inputs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric failure. The NaN policy is fail-fast: the first non-finite value
// produced by any kernel raises this.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/contract violations between tensors.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace lusifer
