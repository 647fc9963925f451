// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lusifer/nn.hpp"

namespace lusifer {

struct ConnectorConfig {
  int d_in = 32;      // encoder hidden size
  int d_hidden = 48;  // defaults to the target size
  int d_out = 48;     // target LM hidden size

  void validate() const;
};

// Hidden states mapped into the target LM space, one trainable token
// appended: length is always the input length + 1, and the appended position
// is always valid while original padding stays masked.
struct AlignedStates {
  VarId states = -1;  // (B, L+1, d_out)
  int batch = 0;
  int len = 0;  // L+1
  std::vector<std::uint8_t> valid;
};

// Two-layer feed-forward map from encoder space to target-LM space plus the
// appended trainable token.
class Connector {
 public:
  Connector(const ConnectorConfig& cfg, ParamSet& ps, Rng& rng);

  const ConnectorConfig& config() const { return cfg_; }

  AlignedStates align(Tape& t, VarId enc_states, const std::vector<std::uint8_t>& valid) const;

 private:
  ConnectorConfig cfg_;
  LinearLayer fc1_;  // connector.W1 / connector.b1
  LinearLayer fc2_;  // connector.W2 / connector.b2, zero-initialized weight
  Param* token_ = nullptr;
};

}  // namespace lusifer
