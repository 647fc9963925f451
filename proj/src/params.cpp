// SPDX-License-Identifier: Apache-2.0
#include "lusifer/params.hpp"

namespace lusifer {

Param& ParamSet::add(std::string name, Tensor init) {
  if (by_name_.count(name)) throw DataError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor::zeros(init.shape);
  p->value = std::move(init);
  Param* raw = p.get();
  items_.push_back(std::move(p));
  by_name_.emplace(std::move(name), raw);
  return *raw;
}

Param* ParamSet::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamSet::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Param& ParamSet::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw DataError("unknown parameter: " + name);
  return *p;
}

void ParamSet::zero_grads() {
  for (auto& p : items_) {
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
  }
}

void ParamSet::snap_f32() {
  for (auto& p : items_) {
    for (auto& x : p->value.data) x = static_cast<double>(static_cast<float>(x));
  }
}

std::size_t ParamSet::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) {
    if (p->trainable) n += p->value.numel();
  }
  return n;
}

void ParamSet::set_all_trainable(bool flag) {
  for (auto& p : items_) p->trainable = flag;
}

void ParamSet::set_trainable_by_prefix(const std::string& prefix, bool flag) {
  for (auto& p : items_) {
    if (p->name.rfind(prefix, 0) == 0) p->trainable = flag;
  }
}

}  // namespace lusifer
