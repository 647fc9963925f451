// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lusifer/connector.hpp"
#include "lusifer/dataset.hpp"
#include "lusifer/nn.hpp"

namespace lusifer {

enum class Pooling { kMean, kLastToken };

struct TargetLMConfig {
  int vocab = 0;
  int d_model = 48;
  int layers = 2;
  int heads = 2;
  int ff = 96;
  int max_len = 32;
  Pooling pooling = Pooling::kMean;

  void validate() const;
};

// Decoder-style transformer consuming aligned states as a soft prefix.
// Causal attention plus the LM head serve the generation objectives; the
// bidirectional mode with pooling produces embeddings.
class TargetLM {
 public:
  TargetLM(const TargetLMConfig& cfg, ParamSet& ps, Rng& rng);

  const TargetLMConfig& config() const { return cfg_; }

  // Teacher-forced logits over the decoder positions: (B, |dec|, V).
  // Decoder token embeddings are appended after the soft prefix; causal
  // attention lets every position see the full earlier context.
  VarId forward_prefix(Tape& t, const AlignedStates& prefix, const TokenBatch& dec) const;

  // Bidirectional encoding of soft states, pooled over valid positions and
  // L2-normalized: (B, d_model).
  VarId embed_states(Tape& t, VarId states, const std::vector<std::uint8_t>& valid, int batch,
                     int len) const;

  // Token-embedding rows for a raw token batch (the no-encoder baseline
  // feeds these directly into embed_states).
  VarId token_states(Tape& t, const TokenBatch& batch) const;

  std::vector<LinearLayer*> projection_linears();

 private:
  VarId run_blocks(Tape& t, VarId x, const Tensor& bias) const;

  TargetLMConfig cfg_;
  Param* tok_emb_ = nullptr;
  Param* pos_emb_ = nullptr;
  std::vector<TransformerBlock> blocks_;
  LayerNormLayer ln_f_;
  LinearLayer lm_head_;
};

}  // namespace lusifer
