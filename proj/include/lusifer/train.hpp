// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lusifer/model.hpp"
#include "lusifer/optim.hpp"

namespace lusifer {

enum class Ablation { kFull, kConnectorOnly, kFrozenEncoder, kAlignmentOnly, kFinetuneOnly };

const std::vector<std::string>& ablation_names();
std::string to_string(Ablation a);
// UsageError listing the five valid values on unknown names.
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  int batch_size = 32;
  double stage0_lr = 1e-3;
  double stage1_lr = 1.5e-4;
  double stage2_lr = 5e-5;
  double warmup_ratio = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int stage0_epochs = 25;
  int stage1_epochs = 2;
  int stage2_epochs = 1;
  double stage0_mask_ratio = 0.4;
  double mask_ratio = 0.5;
  int n_hard_negatives = 7;
  int lora_rank = 16;
  double lora_alpha = 32.0;
  double temperature = 0.05;
  std::uint64_t seed = 42;
  Ablation ablation = Ablation::kFull;

  void validate() const;
  AdamWConfig adamw() const {
    return {.lr = 0.0, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = weight_decay};
  }
};

// Freezes/unfreezes parameter groups for a stage under an ablation variant.
// Stage 0 trains the encoder (with its MLM head); stage 1 trains encoder and
// connector with the target LM fixed; stage 2 trains the connector plus any
// LoRA adapters.
void apply_param_groups(Model& model, int stage, Ablation ablation);

struct LoraPlan {
  bool encoder = false;
  bool target = false;
  bool any() const { return encoder || target; }
};
LoraPlan stage2_lora_plan(Ablation ablation);

struct LossRow {
  long step = 0;
  int stage = 0;
  double total = 0.0;
  double masked = 0.0;  // stage 1 only
  double ar = 0.0;      // stage 1 only
  bool has_tasks = false;
};

// CSV columns: step,stage,loss_total,loss_masked,loss_ar
void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows);

// ---- stage batches and steps ----

struct Stage1Batch {
  TokenBatch enc_in;
  TokenBatch dec_in;
  std::vector<std::int32_t> gold;        // batch * dec_in.len, slot-aligned
  std::vector<std::uint8_t> gold_valid;  // batch * dec_in.len
  std::vector<std::uint8_t> masked_task; // per row: 1 = masked reconstruction
};

// Splits the batch per-example into masked-reconstruction inputs (masked
// text -> original text) and completion inputs (first half -> second half).
Stage1Batch build_stage1_batch(const Vocab& vocab, const std::vector<std::string>& texts,
                               double mask_ratio, Rng& rng);

double stage0_step(Model& model, const TokenBatch& batch, double mask_ratio, Rng& mask_rng,
                   AdamW& opt, double lr, double clip_norm);

struct Stage1LossIds {
  VarId masked = -1;
  VarId ar = -1;
  VarId total = -1;
};
// Loss graph only; reused by the step function and by gradient checks.
Stage1LossIds build_stage1_loss(Tape& t, Model& model, const Stage1Batch& batch);

struct Stage1StepResult {
  double total = 0.0, masked = 0.0, ar = 0.0;
};
Stage1StepResult stage1_step(Model& model, const Stage1Batch& batch, AdamW& opt, double lr,
                             double clip_norm);

// InfoNCE over unit-norm embeddings: candidates for query i are all in-batch
// positives plus its own hard negatives. With all-equal similarities the loss
// is exactly ln(B + n_neg).
VarId info_nce_loss(Tape& t, VarId queries, VarId positives, VarId negatives, double tau);

// Full contrastive loss graph for one batch (embeds queries, positives, and
// each record's first n_negatives hard negatives).
VarId build_stage2_loss(Tape& t, Model& model, const std::vector<ContrastiveRecord>& batch,
                        const Vocab& vocab, double tau, int n_negatives);

struct Stage2StepResult {
  double loss = 0.0;
  int duplicate_positives = 0;  // in-batch false negatives, warned
};
Stage2StepResult stage2_step(Model& model, const std::vector<ContrastiveRecord>& batch,
                             const Vocab& vocab, AdamW& opt, double lr, double clip_norm,
                             double tau, int n_negatives);

// ---- epoch loops ----

std::vector<LossRow> train_stage0(Model& model, const Vocab& vocab,
                                  const std::vector<AlignmentRecord>& data,
                                  const TrainConfig& cfg);
std::vector<LossRow> train_stage1(Model& model, const Vocab& vocab,
                                  const std::vector<AlignmentRecord>& data,
                                  const TrainConfig& cfg);
std::vector<LossRow> train_stage2(Model& model, const Vocab& vocab,
                                  const std::vector<ContrastiveRecord>& data,
                                  const TrainConfig& cfg);

}  // namespace lusifer
