// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "lusifer/connector.hpp"
#include "lusifer/encoder.hpp"
#include "lusifer/target_lm.hpp"

namespace lusifer {

struct ModelConfig {
  EncoderConfig encoder;
  ConnectorConfig connector;
  TargetLMConfig target_lm;
  LoraSpec lora;
};

// The assembled pipeline: multilingual encoder -> connector -> target LM.
// Parameter registration order (encoder, connector, target LM, then any LoRA
// adapters) defines the checkpoint layout.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  Encoder& encoder() { return *encoder_; }
  const Encoder& encoder() const { return *encoder_; }
  Connector& connector() { return *connector_; }
  TargetLM& target_lm() { return *target_lm_; }
  const TargetLM& target_lm() const { return *target_lm_; }

  // encoder -> connector
  AlignedStates align_batch(Tape& t, const TokenBatch& batch) const;
  // full pipeline, bidirectional embedding: (B, d_t), unit rows
  VarId embed_batch(Tape& t, const TokenBatch& batch) const;
  // target-LM-only baseline: token embeddings fed straight into the LM
  VarId embed_batch_lm_only(Tape& t, const TokenBatch& batch) const;

  // Batched, forward-only embedding of texts: (N, d_t).
  Tensor embed_texts(const Vocab& vocab, const std::vector<std::string>& texts,
                     int batch_size = 64) const;
  Tensor embed_texts_lm_only(const Vocab& vocab, const std::vector<std::string>& texts,
                             int batch_size = 64) const;

  // Adds LoRA adapters to the target LM projections (and optionally the
  // encoder projections). Throws on double wrap.
  void wrap_lora(bool include_encoder, std::uint64_t seed);
  void merge_lora();
  bool lora_wrapped() const { return lora_wrapped_; }

  std::vector<LinearLayer*> encoder_projections() { return encoder_->projection_linears(); }
  std::vector<LinearLayer*> target_projections() { return target_lm_->projection_linears(); }

 private:
  ModelConfig cfg_;
  ParamSet params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Connector> connector_;
  std::unique_ptr<TargetLM> target_lm_;
  bool lora_wrapped_ = false;
  bool lora_includes_encoder_ = false;
};

TokenBatch batch_from_texts(const Vocab& vocab, const std::vector<std::string>& texts);

}  // namespace lusifer
