// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lusifer/dataset.hpp"
#include "lusifer/nn.hpp"

namespace lusifer {

struct EncoderConfig {
  int vocab = 0;
  int d_model = 32;
  int layers = 2;
  int heads = 2;
  int ff = 64;
  int max_len = 16;

  void validate() const;
};

// Small bidirectional transformer encoder with learned absolute positions and
// a masked-language-model head for its pretraining stage.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParamSet& ps, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // (B,L,d_model); padded positions are excluded from attention.
  VarId encode(Tape& t, const TokenBatch& batch) const;

  // (B,L,vocab) logits for masked-token prediction.
  VarId mlm_logits(Tape& t, VarId hidden) const;

  std::vector<LinearLayer*> projection_linears();

 private:
  EncoderConfig cfg_;
  Param* tok_emb_ = nullptr;
  Param* pos_emb_ = nullptr;
  std::vector<TransformerBlock> blocks_;
  LayerNormLayer ln_f_;
  LinearLayer mlm_head_;
};

}  // namespace lusifer
