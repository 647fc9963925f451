// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lusifer/rng.hpp"
#include "lusifer/tensor.hpp"
#include "lusifer/vocab.hpp"

namespace lusifer {

// Padded integer token matrix with a validity mask. Padded positions carry
// <pad>; every row keeps at least one valid token.
struct TokenBatch {
  int batch = 0;
  int len = 0;
  std::vector<std::int32_t> ids;    // batch*len, row-major
  std::vector<std::uint8_t> valid;  // batch*len

  static TokenBatch from_rows(const std::vector<std::vector<std::int32_t>>& rows);

  std::int32_t id(int b, int l) const { return ids[static_cast<std::size_t>(b) * len + l]; }
  std::int32_t& id(int b, int l) { return ids[static_cast<std::size_t>(b) * len + l]; }
  bool is_valid(int b, int l) const { return valid[static_cast<std::size_t>(b) * len + l] != 0; }
  int valid_count(int b) const;
  std::vector<std::int32_t> row(int b) const;  // valid ids only
};

struct MaskResult {
  TokenBatch masked;
  TokenBatch targets;  // original ids
};

// Replaces exactly round(ratio * n_content) content positions per row with
// <mask>. Content positions are valid and non-reserved, so padding and
// <bos>/<eos> are never masked. Deterministic given the rng state.
MaskResult mask_tokens(const TokenBatch& batch, double ratio, Rng& rng);

// Positions where masked differs from the original (content was replaced).
std::vector<std::uint8_t> masked_positions(const MaskResult& r);

// Indices of the `count` eligible pool rows most cosine-similar to the query
// embedding; ties broken by lower index. Throws DataError when fewer than
// `count` rows are eligible.
std::vector<int> mine_hard_negative_indices(const Tensor& pool_embeddings,   // (N,d)
                                            const Tensor& query_embedding,  // (d)
                                            const std::vector<std::uint8_t>& eligible,
                                            int count);

// Text-level wrapper: pool rows equal to `positive` are ineligible.
std::vector<std::string> mine_hard_negatives(const std::vector<std::string>& pool_texts,
                                             const Tensor& pool_embeddings,
                                             const Tensor& query_embedding,
                                             const std::string& positive, int count);

// Token-count embedding used for offline hard-negative mining.
Tensor bag_of_tokens_embedding(const Vocab& vocab, const std::string& text);

// ---- JSONL records & IO ----

struct AlignmentRecord {
  std::string text;
  std::string lang;
};

struct ContrastiveRecord {
  std::string query;
  std::string positive;
  std::vector<std::string> negatives;
  std::string lang;
};

struct RetrievalQueryRecord {
  std::string query;
  std::vector<int> relevant_ids;
};

struct CorpusDocRecord {
  int id = 0;
  std::string text;
};

struct StsRecord {
  std::string s1, s2;
  double score = 0.0;
};

struct LabeledTextRecord {
  std::string text;
  int label = 0;
};

struct ClusterRecord {
  std::string text;
  int cluster = 0;
};

struct RerankRecord {
  std::string query;
  std::vector<std::string> candidates;
  std::vector<int> relevance;
};

std::vector<AlignmentRecord> read_alignment_jsonl(const std::string& path);
void write_alignment_jsonl(const std::string& path, const std::vector<AlignmentRecord>& recs);

std::vector<ContrastiveRecord> read_contrastive_jsonl(const std::string& path);
void write_contrastive_jsonl(const std::string& path, const std::vector<ContrastiveRecord>& recs);

std::vector<RetrievalQueryRecord> read_retrieval_queries_jsonl(const std::string& path);
void write_retrieval_queries_jsonl(const std::string& path,
                                   const std::vector<RetrievalQueryRecord>& recs);

std::vector<CorpusDocRecord> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, const std::vector<CorpusDocRecord>& recs);

std::vector<StsRecord> read_sts_jsonl(const std::string& path);
void write_sts_jsonl(const std::string& path, const std::vector<StsRecord>& recs);

std::vector<LabeledTextRecord> read_labeled_jsonl(const std::string& path);
void write_labeled_jsonl(const std::string& path, const std::vector<LabeledTextRecord>& recs);

std::vector<ClusterRecord> read_cluster_jsonl(const std::string& path);
void write_cluster_jsonl(const std::string& path, const std::vector<ClusterRecord>& recs);

std::vector<RerankRecord> read_rerank_jsonl(const std::string& path);
void write_rerank_jsonl(const std::string& path, const std::vector<RerankRecord>& recs);

}  // namespace lusifer
