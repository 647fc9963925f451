// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <unordered_map>

#include "lusifer/params.hpp"

namespace lusifer {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with decoupled weight decay (applied directly to the parameter,
// never through the moment estimates) and bias-corrected moments.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // One update over all trainable params. `lr` overrides cfg.lr for this
  // step (scheduler hook); pass a negative value to use cfg.lr.
  // Throws NumericError on non-finite gradients before any mutation.
  void step(ParamSet& params, double lr = -1.0);

  long step_count() const { return step_count_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  long step_count_ = 0;
  std::unordered_map<const Param*, Slot> slots_;
};

// Linear warmup from 0 to peak over warmup_ratio*total_steps, then cosine
// decay from peak to 0. `step` is the pre-step index in [0, total_steps].
double cosine_lr(long step, long total_steps, double peak_lr, double warmup_ratio);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm. Idempotent.
double clip_grad_norm(std::vector<Tensor*> grads, double max_norm);
double clip_grad_norm(ParamSet& params, double max_norm);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t coords_checked = 0;
};

// Central-difference verification of analytic gradients.
//
// `eval(true)` must run a full forward+backward, accumulating gradients into
// the trainable params (which grad_check zeroes beforehand) and returning the
// loss; `eval(false)` must return the loss without touching gradients. The
// loss must be deterministic.
GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(bool with_grad)>& eval,
                           double eps = 1e-5);

}  // namespace lusifer
