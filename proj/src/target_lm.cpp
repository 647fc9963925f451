// SPDX-License-Identifier: Apache-2.0
#include "lusifer/target_lm.hpp"

namespace lusifer {

void TargetLMConfig::validate() const {
  if (vocab <= 0) throw DataError("target LM vocab size must be positive");
  if (d_model <= 0 || layers <= 0 || heads <= 0 || ff <= 0 || max_len <= 0) {
    throw DataError("target LM dimensions must be positive");
  }
  if (d_model % heads != 0) throw DataError("target LM d_model must be divisible by heads");
}

TargetLM::TargetLM(const TargetLMConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Tensor tok = Tensor::zeros({cfg_.vocab, cfg_.d_model});
  for (auto& x : tok.data) x = rng.normal(0.0, 0.02);
  tok_emb_ = &ps.add("target_lm.tok_emb", std::move(tok));
  Tensor pos = Tensor::zeros({cfg_.max_len, cfg_.d_model});
  for (auto& x : pos.data) x = rng.normal(0.0, 0.02);
  pos_emb_ = &ps.add("target_lm.pos_emb", std::move(pos));
  for (int i = 0; i < cfg_.layers; ++i) {
    blocks_.push_back(make_block(ps, "target_lm.layers." + std::to_string(i), cfg_.d_model,
                                 cfg_.heads, cfg_.ff, rng));
  }
  ln_f_ = make_layer_norm(ps, "target_lm.ln_f", cfg_.d_model);
  lm_head_ = make_linear(ps, "target_lm.lm_head", cfg_.d_model, cfg_.vocab, rng, 0.02);
}

VarId TargetLM::run_blocks(Tape& t, VarId x, const Tensor& bias) const {
  for (const auto& block : blocks_) x = block.apply(t, x, bias);
  return ln_f_.apply(t, x);
}

namespace {

std::vector<std::int32_t> position_ids(int batch, int len) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(batch) * len);
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < len; ++l) out[static_cast<std::size_t>(b) * len + l] = l;
  }
  return out;
}

}  // namespace

VarId TargetLM::forward_prefix(Tape& t, const AlignedStates& prefix, const TokenBatch& dec) const {
  const Tensor& ps = t.val(prefix.states);
  if (ps.rank() != 3 || ps.dim(2) != cfg_.d_model) {
    throw ShapeError("prefix states must be (B,P," + std::to_string(cfg_.d_model) + ")");
  }
  if (prefix.batch != dec.batch) throw ShapeError("prefix/decoder batch mismatch");
  const int combined = prefix.len + dec.len;
  if (combined > cfg_.max_len) {
    throw DataError("combined length " + std::to_string(combined) + " exceeds target LM max " +
                    std::to_string(cfg_.max_len));
  }
  VarId dec_emb = t.embedding(tok_emb_->use(t), dec.ids, {dec.batch, dec.len});
  VarId x = t.concat(prefix.states, dec_emb, 1);
  x = t.add(x, t.embedding(pos_emb_->use(t), position_ids(prefix.batch, combined),
                           {prefix.batch, combined}));
  std::vector<std::uint8_t> valid;
  valid.reserve(static_cast<std::size_t>(prefix.batch) * combined);
  for (int b = 0; b < prefix.batch; ++b) {
    for (int l = 0; l < prefix.len; ++l) {
      valid.push_back(prefix.valid[static_cast<std::size_t>(b) * prefix.len + l]);
    }
    for (int l = 0; l < dec.len; ++l) {
      valid.push_back(dec.valid[static_cast<std::size_t>(b) * dec.len + l]);
    }
  }
  const Tensor bias = attention_mask_bias(valid, prefix.batch, combined, /*causal=*/true);
  VarId h = run_blocks(t, x, bias);
  VarId dec_h = t.slice(h, 1, prefix.len, dec.len);
  return lm_head_.apply(t, dec_h);
}

VarId TargetLM::embed_states(Tape& t, VarId states, const std::vector<std::uint8_t>& valid,
                             int batch, int len) const {
  const Tensor& vs = t.val(states);
  if (vs.rank() != 3 || vs.dim(2) != cfg_.d_model) {
    throw ShapeError("embed input must be (B,L," + std::to_string(cfg_.d_model) + ")");
  }
  if (len > cfg_.max_len) {
    throw DataError("sequence length " + std::to_string(len) + " exceeds target LM max " +
                    std::to_string(cfg_.max_len));
  }
  VarId x = t.add(states, t.embedding(pos_emb_->use(t), position_ids(batch, len), {batch, len}));
  const Tensor bias = attention_mask_bias(valid, batch, len, /*causal=*/false);
  VarId h = run_blocks(t, x, bias);
  std::vector<std::uint8_t> pool_mask = valid;
  if (cfg_.pooling == Pooling::kLastToken) {
    // keep only the last valid position per row
    for (int b = 0; b < batch; ++b) {
      int last = -1;
      for (int l = 0; l < len; ++l) {
        if (valid[static_cast<std::size_t>(b) * len + l]) last = l;
      }
      if (last < 0) throw DataError("embed: row " + std::to_string(b) + " has no valid positions");
      for (int l = 0; l < len; ++l) {
        pool_mask[static_cast<std::size_t>(b) * len + l] = (l == last) ? 1 : 0;
      }
    }
  }
  return t.normalize_rows(t.mean_pool_valid(h, pool_mask));
}

VarId TargetLM::token_states(Tape& t, const TokenBatch& batch) const {
  return t.embedding(tok_emb_->use(t), batch.ids, {batch.batch, batch.len});
}

std::vector<LinearLayer*> TargetLM::projection_linears() {
  std::vector<LinearLayer*> out;
  for (auto& b : blocks_) b.collect_projection_linears(out);
  return out;
}

}  // namespace lusifer
