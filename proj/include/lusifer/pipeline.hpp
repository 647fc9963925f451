// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "lusifer/checkpoint.hpp"
#include "lusifer/runconfig.hpp"

namespace lusifer {

// Stage orchestration shared by the CLI and the test harnesses. Each stage
// writes a checkpoint directory (manifest + payload + loss.csv) and returns
// a short human-readable summary.

std::string run_pretrain_encoder(const RunConfig& cfg, const std::string& ckpt_out);

// Stage 1 starts from a stage-0 encoder checkpoint.
std::string run_train_align(const RunConfig& cfg, const std::string& init_ckpt,
                            const std::string& ckpt_out);

// Stage 2 starts from a stage-1 checkpoint, or directly from stage 0 when
// the ablation skips alignment (finetune_only).
std::string run_train_contrastive(const RunConfig& cfg, const std::string& init_ckpt,
                                  const std::string& ckpt_out);

// Runs the stages the ablation variant requires and returns the final
// checkpoint directory (under out_root/stage1 and out_root/stage2).
std::string run_ablation_pipeline(const RunConfig& cfg, const std::string& stage0_ckpt,
                                  const std::string& out_root);

struct LoadedModel {
  std::unique_ptr<Model> model;
  CheckpointMeta meta;
  RunConfig config;
};

// Reconstructs the model a checkpoint was saved from (wrapping LoRA first
// for stage-2 checkpoints) and loads its parameters.
LoadedModel load_model_from_checkpoint(const std::string& ckpt_dir);

int vocab_size_from_config(const RunConfig& cfg);

void require_final_checkpoint(const CheckpointMeta& meta, const std::string& dir);

}  // namespace lusifer
