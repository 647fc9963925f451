// SPDX-License-Identifier: Apache-2.0
#include "lusifer/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace lusifer {

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"full", "connector_only", "frozen_encoder",
                                                 "alignment_only", "finetune_only"};
  return names;
}

std::string to_string(Ablation a) {
  return ablation_names()[static_cast<std::size_t>(a)];
}

Ablation ablation_from_string(const std::string& s) {
  const auto& names = ablation_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<Ablation>(i);
  }
  std::string msg = "unknown ablation variant '" + s + "'; valid values:";
  for (const auto& n : names) msg += " " + n;
  throw UsageError(msg);
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw DataError("batch_size must be at least 2");
  if (stage0_lr <= 0 || stage1_lr <= 0 || stage2_lr <= 0) throw DataError("learning rates must be positive");
  if (warmup_ratio < 0 || warmup_ratio >= 1) throw DataError("warmup_ratio must lie in [0,1)");
  if (weight_decay < 0) throw DataError("weight_decay must be nonnegative");
  if (clip_norm <= 0) throw DataError("clip_norm must be positive");
  if (stage0_epochs < 1 || stage1_epochs < 1 || stage2_epochs < 1) throw DataError("epochs must be positive");
  if (mask_ratio < 0 || mask_ratio > 1 || stage0_mask_ratio < 0 || stage0_mask_ratio > 1) {
    throw DataError("mask ratios must lie in [0,1]");
  }
  if (n_hard_negatives < 0) throw DataError("n_hard_negatives must be nonnegative");
  if (lora_rank < 1) throw DataError("lora_rank must be positive");
  if (lora_alpha <= 0) throw DataError("lora_alpha must be positive");
  if (temperature <= 0) throw DataError("temperature must be positive");
}

void apply_param_groups(Model& model, int stage, Ablation ablation) {
  ParamSet& ps = model.params();
  ps.set_all_trainable(false);
  switch (stage) {
    case 0:
      ps.set_trainable_by_prefix("encoder.", true);
      break;
    case 1: {
      ps.set_trainable_by_prefix("connector.", true);
      const bool encoder_trains =
          ablation != Ablation::kConnectorOnly && ablation != Ablation::kFrozenEncoder;
      if (encoder_trains) {
        ps.set_trainable_by_prefix("encoder.", true);
        ps.set_trainable_by_prefix("encoder.mlm_head", false);  // stage-0-only head
      }
      break;
    }
    case 2:
      ps.set_trainable_by_prefix("connector.", true);
      ps.set_trainable_by_prefix("lora.", true);
      break;
    default:
      throw DataError("unknown training stage " + std::to_string(stage));
  }
}

LoraPlan stage2_lora_plan(Ablation ablation) {
  switch (ablation) {
    case Ablation::kFull:
    case Ablation::kFinetuneOnly:
      return {.encoder = true, .target = true};
    case Ablation::kFrozenEncoder:
      return {.encoder = false, .target = true};
    case Ablation::kConnectorOnly:
      return {.encoder = false, .target = false};
    case Ablation::kAlignmentOnly:
      return {.encoder = false, .target = false};  // stage 2 never runs
  }
  return {};
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss log " + path);
  out << "step,stage,loss_total,loss_masked,loss_ar\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.step << "," << r.stage << "," << r.total << ",";
    if (r.has_tasks) {
      out << r.masked << "," << r.ar << "\n";
    } else {
      out << ",\n";
    }
  }
}

double stage0_step(Model& model, const TokenBatch& batch, double mask_ratio, Rng& mask_rng,
                   AdamW& opt, double lr, double clip_norm) {
  MaskResult masked = mask_tokens(batch, mask_ratio, mask_rng);
  const std::vector<std::uint8_t> positions = masked_positions(masked);
  if (std::count(positions.begin(), positions.end(), 1) == 0) {
    throw DataError("MLM step has no masked positions");
  }
  Tape t;
  VarId h = model.encoder().encode(t, masked.masked);
  VarId logits = model.encoder().mlm_logits(t, h);
  VarId flat = t.reshape(logits, {batch.batch * batch.len, model.encoder().config().vocab});
  std::vector<std::int32_t> targets(masked.targets.ids.begin(), masked.targets.ids.end());
  VarId loss = t.cross_entropy_mean(flat, targets, positions);
  const double value = t.scalar_value(loss);
  t.backward(loss);
  clip_grad_norm(model.params(), clip_norm);
  opt.step(model.params(), lr);
  model.params().snap_f32();
  model.params().zero_grads();
  return value;
}

Stage1Batch build_stage1_batch(const Vocab& vocab, const std::vector<std::string>& texts,
                               double mask_ratio, Rng& rng) {
  if (texts.size() < 2) throw DataError("stage-1 batch needs at least 2 rows");
  const std::size_t n_masked = (texts.size() + 1) / 2;
  std::vector<std::vector<std::int32_t>> enc_rows, dec_rows, gold_rows;
  Stage1Batch out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const bool masked_task = i < n_masked;
    out.masked_task.push_back(masked_task ? 1 : 0);
    std::vector<std::int32_t> full, enc_row;
    if (masked_task) {
      // reconstruct the original sequence from a masked copy
      full = vocab.encode_wrapped(texts[i]);
      TokenBatch one = TokenBatch::from_rows({full});
      enc_row = mask_tokens(one, mask_ratio, rng).masked.row(0);
    } else {
      // complete the second half given the first
      std::vector<std::int32_t> content = vocab.encode(texts[i]);
      const int n = static_cast<int>(content.size());
      const int k = std::clamp(n / 2, 1, std::max(1, n - 1));
      enc_row.push_back(Vocab::kBos);
      enc_row.insert(enc_row.end(), content.begin(), content.begin() + k);
      enc_row.push_back(Vocab::kEos);
      full.push_back(Vocab::kBos);
      full.insert(full.end(), content.begin() + k, content.end());
      full.push_back(Vocab::kEos);
    }
    enc_rows.push_back(std::move(enc_row));
    dec_rows.emplace_back(full.begin(), full.end() - 1);
    gold_rows.emplace_back(full.begin() + 1, full.end());
  }
  out.enc_in = TokenBatch::from_rows(enc_rows);
  out.dec_in = TokenBatch::from_rows(dec_rows);
  out.gold.assign(static_cast<std::size_t>(out.dec_in.batch) * out.dec_in.len, Vocab::kPad);
  out.gold_valid.assign(out.gold.size(), 0);
  for (int b = 0; b < out.dec_in.batch; ++b) {
    const auto& row = gold_rows[static_cast<std::size_t>(b)];
    for (std::size_t l = 0; l < row.size(); ++l) {
      out.gold[static_cast<std::size_t>(b) * out.dec_in.len + l] = row[l];
      out.gold_valid[static_cast<std::size_t>(b) * out.dec_in.len + l] = 1;
    }
  }
  return out;
}

Stage1LossIds build_stage1_loss(Tape& t, Model& model, const Stage1Batch& batch) {
  AlignedStates aligned = model.align_batch(t, batch.enc_in);
  VarId logits = model.target_lm().forward_prefix(t, aligned, batch.dec_in);
  VarId flat = t.reshape(logits, {batch.dec_in.batch * batch.dec_in.len,
                                  model.target_lm().config().vocab});
  std::vector<std::uint8_t> inc_masked(batch.gold_valid.size(), 0), inc_ar(batch.gold_valid.size(), 0);
  for (int b = 0; b < batch.dec_in.batch; ++b) {
    for (int l = 0; l < batch.dec_in.len; ++l) {
      const std::size_t idx = static_cast<std::size_t>(b) * batch.dec_in.len + l;
      if (!batch.gold_valid[idx]) continue;
      (batch.masked_task[static_cast<std::size_t>(b)] ? inc_masked : inc_ar)[idx] = 1;
    }
  }
  Stage1LossIds ids;
  ids.masked = t.cross_entropy_mean(flat, batch.gold, inc_masked);
  ids.ar = t.cross_entropy_mean(flat, batch.gold, inc_ar);
  ids.total = t.add(ids.masked, ids.ar);  // equal task weights
  return ids;
}

Stage1StepResult stage1_step(Model& model, const Stage1Batch& batch, AdamW& opt, double lr,
                             double clip_norm) {
  for (const auto& p : model.params().items()) {
    if (p->trainable && p->name.rfind("target_lm.", 0) == 0) {
      throw DataError("stage 1 requires a frozen target LM, but " + p->name + " is trainable");
    }
  }
  Tape t;
  Stage1LossIds ids = build_stage1_loss(t, model, batch);
  Stage1StepResult r;
  r.masked = t.scalar_value(ids.masked);
  r.ar = t.scalar_value(ids.ar);
  r.total = t.scalar_value(ids.total);
  t.backward(ids.total);
  clip_grad_norm(model.params(), clip_norm);
  opt.step(model.params(), lr);
  model.params().snap_f32();
  model.params().zero_grads();
  return r;
}

VarId info_nce_loss(Tape& t, VarId queries, VarId positives, VarId negatives, double tau) {
  const Tensor& q = t.val(queries);
  const Tensor& n = t.val(negatives);
  if (q.rank() != 2 || t.val(positives).rank() != 2 || n.rank() != 3) {
    throw ShapeError("info_nce_loss expects (B,d), (B,d), (B,K,d)");
  }
  const int batch = q.dim(0), d = q.dim(1);
  VarId pos_scores = t.matmul(queries, t.transpose_last(positives));          // (B,B)
  VarId neg_scores = t.reshape(t.bmm(negatives, t.reshape(queries, {batch, d, 1})),
                               {batch, n.dim(1)});                            // (B,K)
  VarId logits = t.scale(t.concat(pos_scores, neg_scores, 1), 1.0 / tau);
  std::vector<std::int32_t> targets(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) targets[static_cast<std::size_t>(i)] = i;
  return t.cross_entropy_mean(logits, targets, std::vector<std::uint8_t>(targets.size(), 1));
}

VarId build_stage2_loss(Tape& t, Model& model, const std::vector<ContrastiveRecord>& batch,
                        const Vocab& vocab, double tau, int n_negatives) {
  const int b = static_cast<int>(batch.size());
  if (b < 1) throw DataError("empty stage-2 batch");
  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(b) * (2 + static_cast<std::size_t>(n_negatives)));
  for (const auto& r : batch) texts.push_back(r.query);
  for (const auto& r : batch) texts.push_back(r.positive);
  for (const auto& r : batch) {
    if (static_cast<int>(r.negatives.size()) < n_negatives) {
      throw DataError("contrastive record with " + std::to_string(r.negatives.size()) +
                      " negatives; " + std::to_string(n_negatives) + " required");
    }
    for (int k = 0; k < n_negatives; ++k) texts.push_back(r.negatives[static_cast<std::size_t>(k)]);
  }
  TokenBatch tokens = batch_from_texts(vocab, texts);
  VarId emb = model.embed_batch(t, tokens);  // (B*(2+K), d), unit rows
  const int d = model.target_lm().config().d_model;
  VarId q = t.slice(emb, 0, 0, b);
  VarId pos = t.slice(emb, 0, b, b);
  VarId neg = t.reshape(t.slice(emb, 0, 2 * b, b * n_negatives), {b, n_negatives, d});
  return info_nce_loss(t, q, pos, neg, tau);
}

Stage2StepResult stage2_step(Model& model, const std::vector<ContrastiveRecord>& batch,
                             const Vocab& vocab, AdamW& opt, double lr, double clip_norm,
                             double tau, int n_negatives) {
  Stage2StepResult result;
  {
    std::set<std::string> positives;
    for (const auto& r : batch) {
      if (!positives.insert(r.positive).second) ++result.duplicate_positives;
    }
    if (result.duplicate_positives > 0) {
      std::cerr << "warning: " << result.duplicate_positives
                << " duplicate positive(s) in contrastive batch (in-batch false negatives)\n";
    }
  }
  Tape t;
  VarId loss = build_stage2_loss(t, model, batch, vocab, tau, n_negatives);
  result.loss = t.scalar_value(loss);
  t.backward(loss);
  clip_grad_norm(model.params(), clip_norm);
  opt.step(model.params(), lr);
  model.params().snap_f32();
  model.params().zero_grads();
  return result;
}

namespace {

long batches_in(std::size_t n, int batch_size) {
  return static_cast<long>((n + static_cast<std::size_t>(batch_size) - 1) /
                           static_cast<std::size_t>(batch_size));
}

}  // namespace

std::vector<LossRow> train_stage0(Model& model, const Vocab& vocab,
                                  const std::vector<AlignmentRecord>& data,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("stage-0 dataset is empty");
  AdamW opt(cfg.adamw());
  Rng order_rng(derive_seed(cfg.seed, "stage0-order"));
  Rng mask_rng(derive_seed(cfg.seed, "stage0-mask"));
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const long total_steps = batches_in(data.size(), cfg.batch_size) * cfg.stage0_epochs;
  std::vector<LossRow> rows;
  long step = 0;
  for (int epoch = 0; epoch < cfg.stage0_epochs; ++epoch) {
    order_rng.shuffle(idx);
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<std::int32_t>> rows_tok;
      for (std::size_t i = start; i < end; ++i) {
        rows_tok.push_back(vocab.encode_wrapped(data[idx[i]].text));
      }
      TokenBatch tb = TokenBatch::from_rows(rows_tok);
      const double lr = cosine_lr(step, total_steps, cfg.stage0_lr, cfg.warmup_ratio);
      const double loss = stage0_step(model, tb, cfg.stage0_mask_ratio, mask_rng, opt, lr,
                                      cfg.clip_norm);
      rows.push_back({step, 0, loss, 0.0, 0.0, false});
      ++step;
    }
  }
  return rows;
}

std::vector<LossRow> train_stage1(Model& model, const Vocab& vocab,
                                  const std::vector<AlignmentRecord>& data,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("stage-1 dataset is empty");
  AdamW opt(cfg.adamw());
  Rng order_rng(derive_seed(cfg.seed, "stage1-order"));
  Rng mask_rng(derive_seed(cfg.seed, "stage1-mask"));
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const long total_steps = batches_in(data.size(), cfg.batch_size) * cfg.stage1_epochs;
  std::vector<LossRow> rows;
  long step = 0;
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    order_rng.shuffle(idx);
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) continue;  // both stage-1 tasks need a row
      std::vector<std::string> texts;
      for (std::size_t i = start; i < end; ++i) texts.push_back(data[idx[i]].text);
      Stage1Batch batch = build_stage1_batch(vocab, texts, cfg.mask_ratio, mask_rng);
      const double lr = cosine_lr(step, total_steps, cfg.stage1_lr, cfg.warmup_ratio);
      auto r = stage1_step(model, batch, opt, lr, cfg.clip_norm);
      rows.push_back({step, 1, r.total, r.masked, r.ar, true});
      ++step;
    }
  }
  return rows;
}

std::vector<LossRow> train_stage2(Model& model, const Vocab& vocab,
                                  const std::vector<ContrastiveRecord>& data,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("stage-2 dataset is empty");
  AdamW opt(cfg.adamw());
  Rng order_rng(derive_seed(cfg.seed, "stage2-order"));
  const long total_steps = batches_in(data.size(), cfg.batch_size) * cfg.stage2_epochs;
  std::vector<LossRow> rows;
  long step = 0;
  for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
    // The file is written round-robin over semantic groups, so contiguous
    // windows avoid in-batch false negatives; a seeded rotation picks the
    // epoch's phase.
    const std::size_t off = order_rng.below(data.size());
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ContrastiveRecord> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[(i + off) % data.size()]);
      const double lr = cosine_lr(step, total_steps, cfg.stage2_lr, cfg.warmup_ratio);
      auto r = stage2_step(model, batch, vocab, opt, lr, cfg.clip_norm, cfg.temperature,
                           cfg.n_hard_negatives);
      rows.push_back({step, 2, r.loss, 0.0, 0.0, false});
      ++step;
    }
  }
  return rows;
}

}  // namespace lusifer
