// SPDX-License-Identifier: Apache-2.0
#include "lusifer/pipeline.hpp"

#include <filesystem>
#include <sstream>

namespace lusifer {

namespace fs = std::filesystem;

int vocab_size_from_config(const RunConfig& cfg) {
  const int block = 2 * cfg.entities + 2 * cfg.relations + cfg.fillers;
  return Vocab::kReserved + cfg.languages * block;
}

namespace {

CheckpointMeta make_meta(const RunConfig& cfg, const std::string& stage, bool final_stage) {
  CheckpointMeta meta;
  meta.stage = stage;
  meta.final_stage = final_stage;
  meta.seed = cfg.seed;
  meta.config = run_config_to_map(cfg);
  return meta;
}

LanguageSet load_languages(const RunConfig& cfg) {
  const std::string path = vocab_path(cfg.data_dir);
  if (!fs::exists(path)) {
    throw DataError("vocabulary file " + path + " not found; run gen-testbed first");
  }
  return LanguageSet::load(path);
}

CheckpointMeta require_checkpoint(const std::string& dir, const std::string& expected_stage,
                                  const std::string& what) {
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    throw DataError(what + " requires a " + expected_stage + " checkpoint, but none exists at " +
                    dir);
  }
  CheckpointMeta meta = read_checkpoint_meta(dir);
  if (meta.stage != expected_stage) {
    throw DataError(what + " requires a " + expected_stage + " checkpoint; " + dir + " holds a " +
                    meta.stage + " checkpoint");
  }
  return meta;
}

std::string summarize(const std::vector<LossRow>& rows, const std::string& label) {
  std::ostringstream os;
  os << label << ": " << rows.size() << " steps";
  if (!rows.empty()) {
    os << ", first loss " << rows.front().total << ", last loss " << rows.back().total;
  }
  os << "\n";
  return os.str();
}

}  // namespace

void require_final_checkpoint(const CheckpointMeta& meta, const std::string& dir) {
  if (!meta.final_stage) {
    throw DataError("checkpoint at " + dir + " holds a non-final stage (" + meta.stage +
                    "); evaluation needs the pipeline's final checkpoint");
  }
}

std::string run_pretrain_encoder(const RunConfig& cfg, const std::string& ckpt_out) {
  cfg.validate();
  LanguageSet ls = load_languages(cfg);
  auto data = read_alignment_jsonl(stage0_path(cfg.data_dir));
  Model model(model_config_from(cfg, ls.vocab.size()), cfg.seed);
  TrainConfig tcfg = train_config_from(cfg);
  apply_param_groups(model, 0, tcfg.ablation);
  auto rows = train_stage0(model, ls.vocab, data, tcfg);
  fs::create_directories(ckpt_out);
  write_loss_csv((fs::path(ckpt_out) / "loss.csv").string(), rows);
  save_checkpoint(ckpt_out, model.params(), make_meta(cfg, "stage0", false));
  return summarize(rows, "stage0 (encoder MLM)");
}

std::string run_train_align(const RunConfig& cfg, const std::string& init_ckpt,
                            const std::string& ckpt_out) {
  cfg.validate();
  LanguageSet ls = load_languages(cfg);
  require_checkpoint(init_ckpt, "stage0", "train-align");
  Model model(model_config_from(cfg, ls.vocab.size()), cfg.seed);
  load_checkpoint_params(init_ckpt, model.params());
  auto data = read_alignment_jsonl(stage1_path(cfg.data_dir));
  TrainConfig tcfg = train_config_from(cfg);
  apply_param_groups(model, 1, tcfg.ablation);
  auto rows = train_stage1(model, ls.vocab, data, tcfg);
  const bool final_stage = tcfg.ablation == Ablation::kAlignmentOnly;
  fs::create_directories(ckpt_out);
  write_loss_csv((fs::path(ckpt_out) / "loss.csv").string(), rows);
  save_checkpoint(ckpt_out, model.params(), make_meta(cfg, "stage1", final_stage));
  return summarize(rows, "stage1 (alignment)");
}

std::string run_train_contrastive(const RunConfig& cfg, const std::string& init_ckpt,
                                  const std::string& ckpt_out) {
  cfg.validate();
  LanguageSet ls = load_languages(cfg);
  TrainConfig tcfg = train_config_from(cfg);
  const bool from_stage0 = tcfg.ablation == Ablation::kFinetuneOnly;
  require_checkpoint(init_ckpt, from_stage0 ? "stage0" : "stage1", "train-contrastive");
  Model model(model_config_from(cfg, ls.vocab.size()), cfg.seed);
  load_checkpoint_params(init_ckpt, model.params());
  const LoraPlan plan = stage2_lora_plan(tcfg.ablation);
  if (plan.target) {
    model.wrap_lora(plan.encoder, derive_seed(cfg.seed, "stage2-lora"));
  }
  apply_param_groups(model, 2, tcfg.ablation);
  auto data = read_contrastive_jsonl(stage2_path(cfg.data_dir));
  auto rows = train_stage2(model, ls.vocab, data, tcfg);
  fs::create_directories(ckpt_out);
  write_loss_csv((fs::path(ckpt_out) / "loss.csv").string(), rows);
  save_checkpoint(ckpt_out, model.params(), make_meta(cfg, "stage2", true));
  return summarize(rows, "stage2 (contrastive)");
}

std::string run_ablation_pipeline(const RunConfig& cfg, const std::string& stage0_ckpt,
                                  const std::string& out_root) {
  cfg.validate();
  const Ablation ablation = cfg.ablation_variant();
  const std::string stage1_dir = (fs::path(out_root) / "stage1").string();
  const std::string stage2_dir = (fs::path(out_root) / "stage2").string();
  switch (ablation) {
    case Ablation::kAlignmentOnly:
      run_train_align(cfg, stage0_ckpt, stage1_dir);
      return stage1_dir;
    case Ablation::kFinetuneOnly:
      run_train_contrastive(cfg, stage0_ckpt, stage2_dir);
      return stage2_dir;
    default:
      run_train_align(cfg, stage0_ckpt, stage1_dir);
      run_train_contrastive(cfg, stage1_dir, stage2_dir);
      return stage2_dir;
  }
}

LoadedModel load_model_from_checkpoint(const std::string& ckpt_dir) {
  if (!fs::exists(fs::path(ckpt_dir) / "manifest.json")) {
    throw DataError("no checkpoint found at " + ckpt_dir);
  }
  LoadedModel out;
  out.meta = read_checkpoint_meta(ckpt_dir);
  out.config = run_config_from_map(out.meta.config);
  out.model = std::make_unique<Model>(model_config_from(out.config, vocab_size_from_config(out.config)),
                                      out.meta.seed);
  if (out.meta.stage == "stage2") {
    const LoraPlan plan = stage2_lora_plan(out.config.ablation_variant());
    if (plan.target) {
      out.model->wrap_lora(plan.encoder, derive_seed(out.meta.seed, "stage2-lora"));
    }
  }
  load_checkpoint_params(ckpt_dir, out.model->params());
  return out;
}

}  // namespace lusifer
