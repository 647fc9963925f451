// SPDX-License-Identifier: Apache-2.0
#include "lusifer/model.hpp"

namespace lusifer {

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.connector.d_in != cfg_.encoder.d_model || cfg_.connector.d_out != cfg_.target_lm.d_model) {
    throw DataError("connector dimensions must bridge encoder and target LM hidden sizes");
  }
  Rng enc_rng(derive_seed(seed, "init-encoder"));
  Rng conn_rng(derive_seed(seed, "init-connector"));
  Rng lm_rng(derive_seed(seed, "init-target-lm"));
  encoder_ = std::make_unique<Encoder>(cfg_.encoder, params_, enc_rng);
  connector_ = std::make_unique<Connector>(cfg_.connector, params_, conn_rng);
  target_lm_ = std::make_unique<TargetLM>(cfg_.target_lm, params_, lm_rng);
  params_.snap_f32();
}

AlignedStates Model::align_batch(Tape& t, const TokenBatch& batch) const {
  VarId enc = encoder_->encode(t, batch);
  return connector_->align(t, enc, batch.valid);
}

VarId Model::embed_batch(Tape& t, const TokenBatch& batch) const {
  AlignedStates aligned = align_batch(t, batch);
  return target_lm_->embed_states(t, aligned.states, aligned.valid, aligned.batch, aligned.len);
}

VarId Model::embed_batch_lm_only(Tape& t, const TokenBatch& batch) const {
  VarId states = target_lm_->token_states(t, batch);
  return target_lm_->embed_states(t, states, batch.valid, batch.batch, batch.len);
}

namespace {

Tensor embed_in_chunks(const Vocab& vocab, const std::vector<std::string>& texts, int batch_size,
                       int d,
                       const std::function<VarId(Tape&, const TokenBatch&)>& embed) {
  Tensor out = Tensor::zeros({static_cast<int>(texts.size()), d});
  std::size_t row = 0;
  for (std::size_t start = 0; start < texts.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(texts.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<std::int32_t>> rows;
    for (std::size_t i = start; i < end; ++i) rows.push_back(vocab.encode_wrapped(texts[i]));
    TokenBatch tb = TokenBatch::from_rows(rows);
    Tape t;
    VarId emb = embed(t, tb);
    const Tensor& v = t.val(emb);
    for (int b = 0; b < tb.batch; ++b, ++row) {
      std::copy_n(v.data.data() + static_cast<std::size_t>(b) * d, d,
                  out.data.data() + row * static_cast<std::size_t>(d));
    }
  }
  return out;
}

}  // namespace

Tensor Model::embed_texts(const Vocab& vocab, const std::vector<std::string>& texts,
                          int batch_size) const {
  if (texts.empty()) return Tensor::zeros({0, cfg_.target_lm.d_model});
  return embed_in_chunks(vocab, texts, batch_size, cfg_.target_lm.d_model,
                         [this](Tape& t, const TokenBatch& tb) { return embed_batch(t, tb); });
}

Tensor Model::embed_texts_lm_only(const Vocab& vocab, const std::vector<std::string>& texts,
                                  int batch_size) const {
  if (texts.empty()) return Tensor::zeros({0, cfg_.target_lm.d_model});
  return embed_in_chunks(vocab, texts, batch_size, cfg_.target_lm.d_model,
                         [this](Tape& t, const TokenBatch& tb) { return embed_batch_lm_only(t, tb); });
}

void Model::wrap_lora(bool include_encoder, std::uint64_t seed) {
  if (lora_wrapped_) throw DataError("model already LoRA-wrapped");
  Rng rng(derive_seed(seed, "lora"));
  std::vector<LinearLayer*> layers = target_projections();
  if (include_encoder) {
    auto enc = encoder_projections();
    layers.insert(layers.end(), enc.begin(), enc.end());
  }
  lora_wrap(params_, layers, cfg_.lora, rng);
  params_.snap_f32();
  lora_wrapped_ = true;
  lora_includes_encoder_ = include_encoder;
}

void Model::merge_lora() {
  if (!lora_wrapped_) throw DataError("model is not LoRA-wrapped");
  std::vector<LinearLayer*> layers = target_projections();
  if (lora_includes_encoder_) {
    auto enc = encoder_projections();
    layers.insert(layers.end(), enc.begin(), enc.end());
  }
  lora_merge(layers);
  lora_wrapped_ = false;
  lora_includes_encoder_ = false;
}

TokenBatch batch_from_texts(const Vocab& vocab, const std::vector<std::string>& texts) {
  std::vector<std::vector<std::int32_t>> rows;
  rows.reserve(texts.size());
  for (const auto& s : texts) rows.push_back(vocab.encode_wrapped(s));
  return TokenBatch::from_rows(rows);
}

}  // namespace lusifer
