// SPDX-License-Identifier: Apache-2.0
#include "lusifer/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace lusifer {

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  std::size_t n = numel_of(shape);
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.data) x = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.data.assign(1, value);
  return t;
}

void check_finite(const Tensor& t, const char* op) {
  for (double x : t.data) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  }
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  if (a.data.empty()) return true;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double x : t.data) s += x * x;
  return std::sqrt(s);
}

}  // namespace lusifer
