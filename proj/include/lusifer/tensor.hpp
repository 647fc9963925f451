// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lusifer/common.hpp"

namespace lusifer {

// Dense row-major tensor of doubles. Training configs are free to quantize
// parameter values to the float32 grid (see ParamSet::snap_f32), arithmetic
// always runs in 64-bit.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);  // rank-0

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data.size(); }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at2(int i, int j) {
    return data[static_cast<std::size_t>(i) * dim(1) + j];
  }
  double at2(int i, int j) const {
    return data[static_cast<std::size_t>(i) * dim(1) + j];
  }
  double& at3(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at3(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

// Product of dims; validates every dim >= 0.
std::size_t numel_of(const std::vector<int>& shape);

std::string shape_to_string(const std::vector<int>& shape);

// Throws NumericError naming `op` if any element is NaN/Inf.
void check_finite(const Tensor& t, const char* op);

// Max |a-b| over elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

bool bitwise_equal(const Tensor& a, const Tensor& b);

double l2_norm(const Tensor& t);

}  // namespace lusifer
