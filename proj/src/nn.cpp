// SPDX-License-Identifier: Apache-2.0
#include "lusifer/nn.hpp"

#include <cmath>

namespace lusifer {

VarId LinearLayer::apply(Tape& t, VarId x) const {
  VarId y = t.add_bias(t.matmul(x, W->use(t)), b->use(t));
  if (lora_A) {
    VarId low = t.matmul(x, t.transpose_last(lora_A->use(t)));
    VarId delta = t.matmul(low, t.transpose_last(lora_B->use(t)));
    y = t.add(y, t.scale(delta, lora_scale));
  }
  return y;
}

VarId LayerNormLayer::apply(Tape& t, VarId x) const {
  return t.layer_norm(x, gamma->use(t), beta->use(t));
}

VarId AttentionLayer::apply(Tape& t, VarId x, const Tensor& mask_bias) const {
  const Tensor& vx = t.val(x);
  if (vx.rank() != 3) throw ShapeError("attention input must be (B,L,d)");
  const int d = vx.dim(2);
  if (d % heads != 0) throw ShapeError("hidden size not divisible by head count");
  const int dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  VarId qx = q.apply(t, x);
  VarId kx = k.apply(t, x);
  VarId vxp = v.apply(t, x);

  VarId ctx = -1;
  for (int h = 0; h < heads; ++h) {
    VarId qh = t.slice(qx, 2, h * dk, dk);
    VarId kh = t.slice(kx, 2, h * dk, dk);
    VarId vh = t.slice(vxp, 2, h * dk, dk);
    VarId scores = t.scale(t.bmm(qh, t.transpose_last(kh)), inv_sqrt_dk);
    scores = t.add_const(scores, mask_bias);
    VarId weights = t.softmax(scores, 2);
    VarId head_ctx = t.bmm(weights, vh);
    ctx = h == 0 ? head_ctx : t.concat(ctx, head_ctx, 2);
  }
  return o.apply(t, ctx);
}

VarId MlpLayer::apply(Tape& t, VarId x) const {
  return fc2.apply(t, t.gelu(fc1.apply(t, x)));
}

VarId TransformerBlock::apply(Tape& t, VarId x, const Tensor& mask_bias) const {
  x = t.add(x, attn.apply(t, ln1.apply(t, x), mask_bias));
  x = t.add(x, mlp.apply(t, ln2.apply(t, x)));
  return x;
}

void TransformerBlock::collect_projection_linears(std::vector<LinearLayer*>& out) {
  out.push_back(&attn.q);
  out.push_back(&attn.k);
  out.push_back(&attn.v);
  out.push_back(&attn.o);
  out.push_back(&mlp.fc1);
  out.push_back(&mlp.fc2);
}

LinearLayer make_linear(ParamSet& ps, const std::string& name, int in, int out, Rng& rng,
                        double w_std) {
  Tensor w = Tensor::zeros({in, out});
  for (auto& x : w.data) x = rng.normal(0.0, w_std);
  LinearLayer l;
  l.W = &ps.add(name + ".W", std::move(w));
  l.b = &ps.add(name + ".b", Tensor::zeros({out}));
  return l;
}

LayerNormLayer make_layer_norm(ParamSet& ps, const std::string& name, int d) {
  LayerNormLayer l;
  l.gamma = &ps.add(name + ".gamma", Tensor::full({d}, 1.0));
  l.beta = &ps.add(name + ".beta", Tensor::zeros({d}));
  return l;
}

TransformerBlock make_block(ParamSet& ps, const std::string& prefix, int d, int heads, int ff,
                            Rng& rng) {
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  TransformerBlock b;
  b.ln1 = make_layer_norm(ps, prefix + ".ln1", d);
  b.attn.q = make_linear(ps, prefix + ".attn.q", d, d, rng, w_std);
  b.attn.k = make_linear(ps, prefix + ".attn.k", d, d, rng, w_std);
  b.attn.v = make_linear(ps, prefix + ".attn.v", d, d, rng, w_std);
  b.attn.o = make_linear(ps, prefix + ".attn.o", d, d, rng, w_std);
  b.attn.heads = heads;
  b.ln2 = make_layer_norm(ps, prefix + ".ln2", d);
  b.mlp.fc1 = make_linear(ps, prefix + ".mlp.fc1", d, ff, rng, w_std);
  b.mlp.fc2 = make_linear(ps, prefix + ".mlp.fc2", ff, d, rng,
                          1.0 / std::sqrt(static_cast<double>(ff)));
  return b;
}

Tensor attention_mask_bias(const std::vector<std::uint8_t>& valid, int batch, int len,
                           bool causal) {
  if (valid.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(len)) {
    throw ShapeError("attention_mask_bias mask length mismatch");
  }
  constexpr double kBlocked = -1e30;
  Tensor bias = Tensor::zeros({batch, len, len});
  for (int b = 0; b < batch; ++b) {
    for (int q = 0; q < len; ++q) {
      for (int k = 0; k < len; ++k) {
        const bool visible = valid[static_cast<std::size_t>(b) * len + k] && (!causal || k <= q);
        if (!visible) bias.at3(b, q, k) = kBlocked;
      }
    }
  }
  return bias;
}

namespace {

std::string lora_name_for(const Param& w) {
  std::string base = w.name;
  const std::string suffix = ".W";
  if (base.size() > suffix.size() && base.ends_with(suffix)) {
    base.resize(base.size() - suffix.size());
  }
  return "lora." + base;
}

}  // namespace

void lora_wrap(ParamSet& ps, const std::vector<LinearLayer*>& layers, const LoraSpec& spec,
               Rng& rng) {
  if (spec.rank <= 0) throw DataError("LoRA rank must be positive");
  for (LinearLayer* l : layers) {
    if (l->lora_A) throw DataError("LoRA adapter already present on " + l->W->name);
  }
  for (LinearLayer* l : layers) {
    const int in = l->in_dim(), out = l->out_dim();
    Tensor a = Tensor::zeros({spec.rank, in});
    for (auto& x : a.data) x = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    const std::string base = lora_name_for(*l->W);
    l->lora_A = &ps.add(base + ".A", std::move(a));
    l->lora_B = &ps.add(base + ".B", Tensor::zeros({out, spec.rank}));
    l->lora_scale = spec.alpha / static_cast<double>(spec.rank);
  }
}

void lora_merge(const std::vector<LinearLayer*>& layers) {
  for (LinearLayer* l : layers) {
    if (!l->lora_A) throw DataError("lora_merge on unwrapped layer " + l->W->name);
    const int in = l->in_dim(), out = l->out_dim();
    const int r = l->lora_A->value.dim(0);
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < out; ++j) {
        double s = 0.0;
        for (int rr = 0; rr < r; ++rr) {
          s += l->lora_A->value.at2(rr, i) * l->lora_B->value.at2(j, rr);
        }
        l->W->value.at2(i, j) += l->lora_scale * s;
      }
    }
    l->lora_A->trainable = false;
    l->lora_B->trainable = false;
    l->lora_A = nullptr;
    l->lora_B = nullptr;
    l->lora_scale = 0.0;
  }
}

std::size_t lora_param_count(const std::vector<LinearLayer*>& layers, int rank) {
  std::size_t n = 0;
  for (const LinearLayer* l : layers) {
    n += static_cast<std::size_t>(rank) *
         (static_cast<std::size_t>(l->in_dim()) + static_cast<std::size_t>(l->out_dim()));
  }
  return n;
}

}  // namespace lusifer
