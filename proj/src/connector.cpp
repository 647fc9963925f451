// SPDX-License-Identifier: Apache-2.0
#include "lusifer/connector.hpp"

#include <cmath>

namespace lusifer {

void ConnectorConfig::validate() const {
  if (d_in <= 0 || d_hidden <= 0 || d_out <= 0) {
    throw DataError("connector dimensions must be positive");
  }
}

Connector::Connector(const ConnectorConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  Tensor w1 = Tensor::zeros({cfg_.d_in, cfg_.d_hidden});
  for (auto& x : w1.data) x = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg_.d_in)));
  fc1_.W = &ps.add("connector.W1", std::move(w1));
  fc1_.b = &ps.add("connector.b1", Tensor::zeros({cfg_.d_hidden}));
  // zero init: the target LM initially sees only b2 plus the trainable token
  fc2_.W = &ps.add("connector.W2", Tensor::zeros({cfg_.d_hidden, cfg_.d_out}));
  fc2_.b = &ps.add("connector.b2", Tensor::zeros({cfg_.d_out}));
  Tensor tok = Tensor::zeros({cfg_.d_out});
  for (auto& x : tok.data) x = rng.normal(0.0, 0.02);
  token_ = &ps.add("connector.t", std::move(tok));
}

AlignedStates Connector::align(Tape& t, VarId enc_states,
                               const std::vector<std::uint8_t>& valid) const {
  const Tensor& v = t.val(enc_states);
  if (v.rank() != 3 || v.dim(2) != cfg_.d_in) {
    throw ShapeError("connector input must be (B,L," + std::to_string(cfg_.d_in) + "), got " +
                     v.shape_str());
  }
  const int batch = v.dim(0), len = v.dim(1);
  if (valid.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(len)) {
    throw ShapeError("connector mask length mismatch");
  }
  VarId ff = fc2_.apply(t, t.gelu(fc1_.apply(t, enc_states)));
  VarId tok = t.tile_rows(token_->use(t), batch);
  AlignedStates out;
  out.states = t.concat(ff, tok, 1);
  out.batch = batch;
  out.len = len + 1;
  out.valid.reserve(static_cast<std::size_t>(batch) * (static_cast<std::size_t>(len) + 1));
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < len; ++l) {
      out.valid.push_back(valid[static_cast<std::size_t>(b) * len + l]);
    }
    out.valid.push_back(1);  // the appended token is always valid
  }
  return out;
}

}  // namespace lusifer
