// SPDX-License-Identifier: Apache-2.0
#include "lusifer/optim.hpp"

#include <cmath>
#include <numbers>

namespace lusifer {

void AdamW::step(ParamSet& params, double lr) {
  const double eta = lr < 0 ? cfg_.lr : lr;
  // Validate every gradient before mutating anything.
  for (const auto& p : params.items()) {
    if (!p->trainable) continue;
    for (double g : p->grad.data) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter " + p->name);
      }
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (const auto& p : params.items()) {
    if (!p->trainable) continue;
    Slot& slot = slots_[p.get()];
    if (slot.m.data.empty()) {
      slot.m = Tensor::zeros(p->value.shape);
      slot.v = Tensor::zeros(p->value.shape);
    }
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double g = p->grad.data[i];
      double& m = slot.m.data[i];
      double& v = slot.v.data[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      double& theta = p->value.data[i];
      theta -= eta * cfg_.weight_decay * theta;  // decoupled decay
      theta -= eta * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double cosine_lr(long step, long total_steps, double peak_lr, double warmup_ratio) {
  if (total_steps <= 0) throw DataError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw DataError("cosine_lr: step " + std::to_string(step) + " outside [0," +
                    std::to_string(total_steps) + "]");
  }
  const double warmup = warmup_ratio * static_cast<double>(total_steps);
  if (warmup > 0.0 && static_cast<double>(step) < warmup) {
    return peak_lr * static_cast<double>(step) / warmup;
  }
  const double span = static_cast<double>(total_steps) - warmup;
  if (span <= 0.0) return peak_lr;
  const double progress = (static_cast<double>(step) - warmup) / span;
  return peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(std::vector<Tensor*> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads) {
    for (double x : g->data) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in clip_grad_norm");
      sq += x * x;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor* g : grads) {
      for (double& x : g->data) x *= s;
    }
  }
  return norm;
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  std::vector<Tensor*> grads;
  for (const auto& p : params.items()) {
    if (p->trainable) grads.push_back(&p->grad);
  }
  return clip_grad_norm(std::move(grads), max_norm);
}

GradCheckReport grad_check(ParamSet& params,
                           const std::function<double(bool)>& eval, double eps) {
  params.zero_grads();
  eval(true);
  // Snapshot analytic gradients before perturbing.
  std::vector<Tensor> analytic;
  std::vector<Param*> checked;
  for (const auto& p : params.items()) {
    if (!p->trainable) continue;
    analytic.push_back(p->grad);
    checked.push_back(p.get());
  }
  GradCheckReport report;
  for (std::size_t pi = 0; pi < checked.size(); ++pi) {
    Param* p = checked[pi];
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double f_plus = eval(false);
      p->value.data[i] = saved - eps;
      const double f_minus = eval(false);
      p->value.data[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double ga = analytic[pi].data[i];
      // The floor keeps coordinates whose true gradient sits at or below the
      // finite-difference roundoff level from dominating the report.
      const double denom = std::max({std::fabs(ga), std::fabs(numeric), 1e-4});
      const double rel = std::fabs(ga - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace lusifer
