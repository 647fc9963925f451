// SPDX-License-Identifier: Apache-2.0
#include "lusifer/runconfig.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace lusifer {

namespace {

struct Field {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& name, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw DataError("config key " + name + ": cannot parse '" + v + "' as a number");
  }
}

long long parse_int(const std::string& name, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw DataError("config key " + name + ": cannot parse '" + v + "' as an integer");
  }
}

#define STR_FIELD(f) \
  {#f, [](const RunConfig& c) { return c.f; }, \
   [](RunConfig& c, const std::string& v) { c.f = v; }}
#define INT_FIELD(f) \
  {#f, [](const RunConfig& c) { return std::to_string(c.f); }, \
   [](RunConfig& c, const std::string& v) { c.f = static_cast<int>(parse_int(#f, v)); }}
#define U64_FIELD(f) \
  {#f, [](const RunConfig& c) { return std::to_string(c.f); }, \
   [](RunConfig& c, const std::string& v) { c.f = static_cast<std::uint64_t>(parse_int(#f, v)); }}
#define DBL_FIELD(f) \
  {#f, [](const RunConfig& c) { return fmt_double(c.f); }, \
   [](RunConfig& c, const std::string& v) { c.f = parse_double(#f, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      U64_FIELD(seed),
      STR_FIELD(data_dir),
      STR_FIELD(checkpoint_dir),
      STR_FIELD(report_dir),
      STR_FIELD(ablation),
      STR_FIELD(held_out_language),
      STR_FIELD(pooling),
      INT_FIELD(enc_d_model),
      INT_FIELD(enc_layers),
      INT_FIELD(enc_heads),
      INT_FIELD(enc_ff),
      INT_FIELD(enc_max_len),
      INT_FIELD(lm_d_model),
      INT_FIELD(lm_layers),
      INT_FIELD(lm_heads),
      INT_FIELD(lm_ff),
      INT_FIELD(lm_max_len),
      INT_FIELD(connector_hidden),
      INT_FIELD(batch_size),
      DBL_FIELD(stage0_lr),
      DBL_FIELD(stage1_lr),
      DBL_FIELD(stage2_lr),
      DBL_FIELD(warmup_ratio),
      DBL_FIELD(weight_decay),
      DBL_FIELD(clip_norm),
      INT_FIELD(stage0_epochs),
      INT_FIELD(stage1_epochs),
      INT_FIELD(stage2_epochs),
      DBL_FIELD(stage0_mask_ratio),
      DBL_FIELD(mask_ratio),
      INT_FIELD(n_hard_negatives),
      INT_FIELD(lora_rank),
      DBL_FIELD(lora_alpha),
      DBL_FIELD(temperature),
      INT_FIELD(languages),
      INT_FIELD(entities),
      INT_FIELD(relations),
      INT_FIELD(fillers),
      INT_FIELD(facts),
      INT_FIELD(max_extra_fillers),
      DBL_FIELD(code_switch_ratio),
      INT_FIELD(stage0_sentences_per_lang),
      INT_FIELD(stage1_sentences),
      INT_FIELD(stage2_examples),
      INT_FIELD(eval_sts_pairs),
      INT_FIELD(eval_cls_train),
      INT_FIELD(eval_cls_test),
      INT_FIELD(eval_clustering),
      INT_FIELD(eval_rerank_queries),
      INT_FIELD(eval_rerank_candidates),
      INT_FIELD(knn_k),
      INT_FIELD(kmeans_restarts),
      INT_FIELD(eval_batch_size),
  };
  return table;
}

#undef STR_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  (void)ablation_from_string(ablation);
  if (pooling != "mean" && pooling != "last") {
    throw DataError("pooling must be 'mean' or 'last', got '" + pooling + "'");
  }
  if (enc_d_model <= 0 || lm_d_model <= 0 || connector_hidden <= 0) {
    throw DataError("model dimensions must be positive");
  }
  if (languages < 2) throw DataError("languages must be at least 2");
  train_config_from(*this).validate();
}

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.name) {
      f.set(cfg, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_override(cfg, key, value);
  }
  return cfg;
}

RunConfig load_run_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), base);
}

std::string dump_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.name << " = " << f.get(cfg) << "\n";
  return os.str();
}

std::map<std::string, std::string> run_config_to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> kv;
  for (const auto& f : fields()) kv[f.name] = f.get(cfg);
  return kv;
}

RunConfig run_config_from_map(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv) apply_config_override(cfg, k, v);
  return cfg;
}

TestbedSpec testbed_spec_from(const RunConfig& cfg) {
  TestbedSpec s;
  s.seed = cfg.seed;
  s.languages = cfg.languages;
  s.entities = cfg.entities;
  s.relations = cfg.relations;
  s.fillers = cfg.fillers;
  s.facts = cfg.facts;
  s.max_extra_fillers = cfg.max_extra_fillers;
  s.code_switch_ratio = cfg.code_switch_ratio;
  s.stage0_sentences_per_lang = cfg.stage0_sentences_per_lang;
  s.stage1_sentences = cfg.stage1_sentences;
  s.stage2_examples = cfg.stage2_examples;
  s.n_hard_negatives = cfg.n_hard_negatives;
  s.eval_sts_pairs = cfg.eval_sts_pairs;
  s.eval_cls_train = cfg.eval_cls_train;
  s.eval_cls_test = cfg.eval_cls_test;
  s.eval_clustering = cfg.eval_clustering;
  s.eval_rerank_queries = cfg.eval_rerank_queries;
  s.eval_rerank_candidates = cfg.eval_rerank_candidates;
  return s;
}

ModelConfig model_config_from(const RunConfig& cfg, int vocab_size) {
  ModelConfig m;
  m.encoder = {vocab_size, cfg.enc_d_model, cfg.enc_layers, cfg.enc_heads, cfg.enc_ff,
               cfg.enc_max_len};
  m.connector = {cfg.enc_d_model, cfg.connector_hidden, cfg.lm_d_model};
  m.target_lm.vocab = vocab_size;
  m.target_lm.d_model = cfg.lm_d_model;
  m.target_lm.layers = cfg.lm_layers;
  m.target_lm.heads = cfg.lm_heads;
  m.target_lm.ff = cfg.lm_ff;
  m.target_lm.max_len = cfg.lm_max_len;
  m.target_lm.pooling = cfg.pooling == "last" ? Pooling::kLastToken : Pooling::kMean;
  m.lora = {cfg.lora_rank, cfg.lora_alpha};
  return m;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.batch_size = cfg.batch_size;
  t.stage0_lr = cfg.stage0_lr;
  t.stage1_lr = cfg.stage1_lr;
  t.stage2_lr = cfg.stage2_lr;
  t.warmup_ratio = cfg.warmup_ratio;
  t.weight_decay = cfg.weight_decay;
  t.clip_norm = cfg.clip_norm;
  t.stage0_epochs = cfg.stage0_epochs;
  t.stage1_epochs = cfg.stage1_epochs;
  t.stage2_epochs = cfg.stage2_epochs;
  t.stage0_mask_ratio = cfg.stage0_mask_ratio;
  t.mask_ratio = cfg.mask_ratio;
  t.n_hard_negatives = cfg.n_hard_negatives;
  t.lora_rank = cfg.lora_rank;
  t.lora_alpha = cfg.lora_alpha;
  t.temperature = cfg.temperature;
  t.seed = cfg.seed;
  t.ablation = cfg.ablation_variant();
  return t;
}

}  // namespace lusifer
