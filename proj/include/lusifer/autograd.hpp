// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lusifer/tensor.hpp"

namespace lusifer {

using VarId = int;

// Define-by-run reverse-mode tape. Every kernel checks its output for
// non-finite values (fail-fast NaN policy) and registers an analytic
// backward closure when any input requires gradients.
//
// Kernels are pure over immutable inputs; a Tape instance is owned by a
// single forward/backward pass and is not thread-safe. Separate tapes may
// run concurrently.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  // Value with no gradient path.
  VarId constant(Tensor value);

  // Leaf variable. If `grad_sink` is non-null the accumulated gradient is
  // added into it by backward(); a null sink marks a frozen leaf.
  VarId leaf(const Tensor& value, Tensor* grad_sink);

  const Tensor& val(VarId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar_value(VarId id) const;
  bool wants_grad(VarId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // Gradient buffer, allocated (zeroed) on first access. Only meaningful
  // for nodes with wants_grad().
  Tensor& grad_buffer(VarId id);
  bool grad_allocated(VarId id) const {
    return nodes_[static_cast<std::size_t>(id)].grad_alloc;
  }

  // Reverse pass from a scalar root; accumulates leaf gradients into their
  // sinks. May be called once per tape.
  void backward(VarId root);

  void reset();
  std::size_t size() const { return nodes_.size(); }

  // ---- kernels ----
  VarId add(VarId a, VarId b);                      // same shape
  VarId add_bias(VarId a, VarId b);                 // b broadcast over last dim of a
  VarId mul(VarId a, VarId b);                      // elementwise, same shape
  VarId scale(VarId a, double c);
  VarId add_const(VarId a, const Tensor& c);        // c carries no gradient
  VarId matmul(VarId a, VarId b);                   // a (...,k) x b (k,n)
  VarId bmm(VarId a, VarId b);                      // (N,p,q) x (N,q,r)
  VarId transpose_last(VarId a);                    // rank 2 or 3
  VarId reshape(VarId a, std::vector<int> shape);
  VarId concat(VarId a, VarId b, int axis);
  VarId slice(VarId a, int axis, int start, int len);
  VarId embedding(VarId table, const std::vector<std::int32_t>& ids,
                  std::vector<int> id_shape);       // table (V,d) -> id_shape + {d}
  VarId tile_rows(VarId v, int batch);              // (d) -> (batch,1,d)
  VarId gelu(VarId a);
  VarId layer_norm(VarId x, VarId gamma, VarId beta, double eps = 1e-5);
  VarId softmax(VarId x, int axis);
  // Mean NLL over rows with include[i] != 0; logits (N,V).
  VarId cross_entropy_mean(VarId logits, const std::vector<std::int32_t>& targets,
                           const std::vector<std::uint8_t>& include);
  VarId normalize_rows(VarId x);                    // (N,d), unit L2 rows
  VarId mean_pool_valid(VarId x, const std::vector<std::uint8_t>& valid);  // (B,L,d) -> (B,d)
  VarId sum_all(VarId a);
  VarId mean_all(VarId a);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    Tensor* sink = nullptr;
    std::function<void(Tape&, const Tensor&)> backward;
  };

  VarId alloc(Tensor value, std::initializer_list<VarId> parents, const char* op);
  Node& node(VarId id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace lusifer
