// SPDX-License-Identifier: Apache-2.0
#include "lusifer/encoder.hpp"

namespace lusifer {

void EncoderConfig::validate() const {
  if (vocab <= 0) throw DataError("encoder vocab size must be positive");
  if (d_model <= 0 || layers <= 0 || heads <= 0 || ff <= 0 || max_len <= 0) {
    throw DataError("encoder dimensions must be positive");
  }
  if (d_model % heads != 0) throw DataError("encoder d_model must be divisible by heads");
}

Encoder::Encoder(const EncoderConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Tensor tok = Tensor::zeros({cfg_.vocab, cfg_.d_model});
  for (auto& x : tok.data) x = rng.normal(0.0, 0.02);
  tok_emb_ = &ps.add("encoder.tok_emb", std::move(tok));
  Tensor pos = Tensor::zeros({cfg_.max_len, cfg_.d_model});
  for (auto& x : pos.data) x = rng.normal(0.0, 0.02);
  pos_emb_ = &ps.add("encoder.pos_emb", std::move(pos));
  for (int i = 0; i < cfg_.layers; ++i) {
    blocks_.push_back(
        make_block(ps, "encoder.layers." + std::to_string(i), cfg_.d_model, cfg_.heads, cfg_.ff, rng));
  }
  ln_f_ = make_layer_norm(ps, "encoder.ln_f", cfg_.d_model);
  // small init keeps untrained MLM logits near uniform
  mlm_head_ = make_linear(ps, "encoder.mlm_head", cfg_.d_model, cfg_.vocab, rng, 0.02);
}

VarId Encoder::encode(Tape& t, const TokenBatch& batch) const {
  if (batch.len > cfg_.max_len) {
    throw DataError("sequence length " + std::to_string(batch.len) +
                    " exceeds encoder max length " + std::to_string(cfg_.max_len));
  }
  std::vector<std::int32_t> pos_ids(static_cast<std::size_t>(batch.batch) * batch.len);
  for (int b = 0; b < batch.batch; ++b) {
    for (int l = 0; l < batch.len; ++l) {
      pos_ids[static_cast<std::size_t>(b) * batch.len + l] = l;
    }
  }
  VarId x = t.add(t.embedding(tok_emb_->use(t), batch.ids, {batch.batch, batch.len}),
                  t.embedding(pos_emb_->use(t), pos_ids, {batch.batch, batch.len}));
  const Tensor bias = attention_mask_bias(batch.valid, batch.batch, batch.len, /*causal=*/false);
  for (const auto& block : blocks_) x = block.apply(t, x, bias);
  return ln_f_.apply(t, x);
}

VarId Encoder::mlm_logits(Tape& t, VarId hidden) const { return mlm_head_.apply(t, hidden); }

std::vector<LinearLayer*> Encoder::projection_linears() {
  std::vector<LinearLayer*> out;
  for (auto& b : blocks_) b.collect_projection_linears(out);
  return out;
}

}  // namespace lusifer
