// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lusifer/autograd.hpp"
#include "lusifer/params.hpp"
#include "lusifer/rng.hpp"

namespace lusifer {

// Affine layer y = xW + b with an optional LoRA adapter
// (y += (alpha/r) * x A^T B^T, A: r x in, B: out x r; B zero-initialized so a
// fresh adapter is an exact no-op).
struct LinearLayer {
  Param* W = nullptr;  // (in, out)
  Param* b = nullptr;  // (out)
  Param* lora_A = nullptr;
  Param* lora_B = nullptr;
  double lora_scale = 0.0;

  int in_dim() const { return W->value.dim(0); }
  int out_dim() const { return W->value.dim(1); }
  VarId apply(Tape& t, VarId x) const;
};

struct LayerNormLayer {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  VarId apply(Tape& t, VarId x) const;
};

struct AttentionLayer {
  LinearLayer q, k, v, o;
  int heads = 1;
  // x: (B,L,d); mask_bias: (B,L,L) additive, 0 for allowed and -1e30 for
  // blocked key positions (exp underflows to exactly zero weight).
  VarId apply(Tape& t, VarId x, const Tensor& mask_bias) const;
};

struct MlpLayer {
  LinearLayer fc1, fc2;
  VarId apply(Tape& t, VarId x) const;
};

// Pre-norm block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  LayerNormLayer ln1;
  AttentionLayer attn;
  LayerNormLayer ln2;
  MlpLayer mlp;

  VarId apply(Tape& t, VarId x, const Tensor& mask_bias) const;
  void collect_projection_linears(std::vector<LinearLayer*>& out);
};

LinearLayer make_linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng,
                        double w_std);
LayerNormLayer make_layer_norm(ParamSet& ps, const std::string& name, int d);
TransformerBlock make_block(ParamSet& ps, const std::string& prefix, int d, int heads, int ff,
                            Rng& rng);

// Additive attention bias over keys: blocked positions get -1e30. With
// causal=true, key k is visible to query q only when k <= q.
Tensor attention_mask_bias(const std::vector<std::uint8_t>& valid, int batch, int len,
                           bool causal);

// ---- LoRA ----

struct LoraSpec {
  int rank = 16;
  double alpha = 32.0;
};

// Wraps each layer with adapters named "lora.<W name without .W>.A/.B".
// Throws DataError on double wrapping.
void lora_wrap(ParamSet& ps, const std::vector<LinearLayer*>& layers, const LoraSpec& spec,
               Rng& rng);
// Folds adapters into the base weights and detaches them from the forward
// path (adapter params become frozen orphans in the set).
void lora_merge(const std::vector<LinearLayer*>& layers);
// Trainable-scalar count a wrap adds: sum of rank*(in+out).
std::size_t lora_param_count(const std::vector<LinearLayer*>& layers, int rank);

}  // namespace lusifer
