// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lusifer/autograd.hpp"
#include "lusifer/tensor.hpp"

namespace lusifer {

// Named trainable tensor. Gradients are accumulated additively by the tape
// and must be zeroed between optimizer steps.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  VarId use(Tape& t) { return t.leaf(value, trainable ? &grad : nullptr); }
  // Forward-only leaf: never requests a gradient regardless of flags.
  VarId use_frozen(Tape& t) const { return t.leaf(value, nullptr); }
};

// Ordered registry of parameters; insertion order defines checkpoint layout.
class ParamSet {
 public:
  Param& add(std::string name, Tensor init);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  const std::vector<std::unique_ptr<Param>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void zero_grads();
  // Rounds every value to its nearest float32 so checkpoints (raw f32
  // payload) round-trip bit-exactly.
  void snap_f32();

  std::size_t trainable_scalar_count() const;
  void set_all_trainable(bool flag);
  void set_trainable_by_prefix(const std::string& prefix, bool flag);

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::unordered_map<std::string, Param*> by_name_;
};

}  // namespace lusifer
