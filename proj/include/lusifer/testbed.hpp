// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lusifer/dataset.hpp"
#include "lusifer/rng.hpp"
#include "lusifer/vocab.hpp"

namespace lusifer {

// Synthetic parallel-corpus generator. Sentences express facts
// (subject, relation, object) over a closed entity/relation inventory; every
// entity and relation has two interchangeable surface synonyms, and a
// paraphrase flips every synonym choice, so paraphrases share no content
// tokens. Each non-base language renders the same facts through a bijective
// token-id cipher with a disjoint content range.
struct TestbedSpec {
  std::uint64_t seed = 42;
  int languages = 3;  // base + (languages-1) ciphers
  int entities = 16;
  int relations = 8;
  int fillers = 4;
  int facts = 96;
  int max_extra_fillers = 2;
  // Per-token probability that a stage-0 sentence token is rendered in a
  // different random language (code-switching; the pressure that makes the
  // encoder language-agnostic).
  double code_switch_ratio = 0.5;
  int stage0_sentences_per_lang = 1024;
  int stage1_sentences = 6144;
  int stage2_examples = 4800;
  int n_hard_negatives = 7;
  int eval_sts_pairs = 96;
  int eval_cls_train = 96;
  int eval_cls_test = 96;
  int eval_clustering = 96;
  int eval_rerank_queries = 24;
  int eval_rerank_candidates = 10;

  void validate() const;
};

struct Fact {
  int subject = 0, relation = 0, object = 0;
};

// One sentence of the templated corpus: semantic id plus its base-language
// token ids (content only, no <bos>/<eos>).
struct CorpusSentence {
  int semantic_id = 0;
  std::array<int, 3> syn{};  // synonym choice per slot
  std::vector<std::int32_t> tokens;
};

class Testbed {
 public:
  explicit Testbed(TestbedSpec spec);

  const TestbedSpec& spec() const { return spec_; }
  const LanguageSet& languages() const { return langs_; }
  const Vocab& vocab() const { return langs_.vocab; }
  const std::vector<Fact>& facts() const { return facts_; }

  // Base-language token ids for a fact rendering. Filler tokens and their
  // placement come from `rng`.
  std::vector<std::int32_t> render(int fact_idx, const std::array<int, 3>& syn, Rng& rng) const;
  std::vector<std::int32_t> render_triple(int subject, int relation, int object,
                                          const std::array<int, 3>& syn, Rng& rng) const;
  static std::array<int, 3> flip(const std::array<int, 3>& syn) {
    return {1 - syn[0], 1 - syn[1], 1 - syn[2]};
  }

  // Renders base ids in a language (cipher applied for non-base tags).
  std::string text_of(const std::vector<std::int32_t>& base_ids, const std::string& lang) const;

  // Deterministic templated corpus of n sentences; paraphrase pairs share a
  // semantic id (the fact index).
  std::vector<CorpusSentence> build_corpus(int n_sentences, Rng& rng) const;

  std::int32_t entity_token(int entity, int syn) const;
  std::int32_t relation_token(int relation, int syn) const;
  std::int32_t filler_token(int f) const;

 private:
  TestbedSpec spec_;
  LanguageSet langs_;
  std::vector<Fact> facts_;
  int content_block_ = 0;  // tokens per language block
};

// Writes the complete on-disk testbed (vocab, stage datasets, per-language
// eval datasets) under out_dir. Returns a human-readable stats summary.
std::string generate_testbed(const TestbedSpec& spec, const std::string& out_dir, bool force);

// Data-directory layout helpers shared by the trainer and the CLI.
std::string stage0_path(const std::string& data_dir);
std::string stage1_path(const std::string& data_dir);
std::string stage2_path(const std::string& data_dir);
std::string vocab_path(const std::string& data_dir);
std::string eval_dir(const std::string& data_dir, const std::string& lang);

}  // namespace lusifer
