// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "lusifer/model.hpp"
#include "lusifer/testbed.hpp"
#include "lusifer/train.hpp"

namespace lusifer {

// Flat key = value configuration shared by every command. File values
// override defaults; command-line flags override file values. Unknown keys
// are rejected. `dump` emits the effective config in the same format.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string data_dir = "data";
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";
  std::string ablation = "full";
  std::string held_out_language = "cipher2";
  std::string pooling = "mean";

  // model dimensions
  int enc_d_model = 32;
  int enc_layers = 2;
  int enc_heads = 2;
  int enc_ff = 64;
  int enc_max_len = 16;
  int lm_d_model = 48;
  int lm_layers = 2;
  int lm_heads = 2;
  int lm_ff = 96;
  int lm_max_len = 32;
  int connector_hidden = 48;

  // training (defaults follow the two-stage recipe; batch size 32 is the
  // desk-scale default, 256 is the full-scale setting)
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

  // testbed generation
  int languages = 3;
  int entities = 16;
  int relations = 8;
  int fillers = 4;
  int facts = 96;
  int max_extra_fillers = 2;
  double code_switch_ratio = 0.5;
  int stage0_sentences_per_lang = 1024;
  int stage1_sentences = 6144;
  int stage2_examples = 4800;
  int eval_sts_pairs = 96;
  int eval_cls_train = 96;
  int eval_cls_test = 96;
  int eval_clustering = 96;
  int eval_rerank_queries = 24;
  int eval_rerank_candidates = 10;

  // evaluation
  int knn_k = 5;
  int kmeans_restarts = 10;
  int eval_batch_size = 64;

  void validate() const;

  Ablation ablation_variant() const { return ablation_from_string(ablation); }
};

// key = value text (one per line, '#' comments). Unknown keys raise
// UsageError; malformed values raise DataError.
RunConfig parse_run_config(const std::string& text, const RunConfig& base = RunConfig{});
RunConfig load_run_config_file(const std::string& path, const RunConfig& base = RunConfig{});
// Round-trips through parse_run_config.
std::string dump_run_config(const RunConfig& cfg);

std::map<std::string, std::string> run_config_to_map(const RunConfig& cfg);
RunConfig run_config_from_map(const std::map<std::string, std::string>& kv);

// Applies one "key=value" or "key value" assignment (CLI --set).
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

TestbedSpec testbed_spec_from(const RunConfig& cfg);
ModelConfig model_config_from(const RunConfig& cfg, int vocab_size);
TrainConfig train_config_from(const RunConfig& cfg);

}  // namespace lusifer
