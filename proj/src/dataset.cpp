// SPDX-License-Identifier: Apache-2.0
#include "lusifer/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace lusifer {

using nlohmann::json;

TokenBatch TokenBatch::from_rows(const std::vector<std::vector<std::int32_t>>& rows) {
  TokenBatch tb;
  tb.batch = static_cast<int>(rows.size());
  std::size_t max_len = 0;
  for (const auto& r : rows) {
    if (r.empty()) throw DataError("TokenBatch row with no valid tokens");
    max_len = std::max(max_len, r.size());
  }
  tb.len = static_cast<int>(max_len);
  tb.ids.assign(static_cast<std::size_t>(tb.batch) * tb.len, Vocab::kPad);
  tb.valid.assign(static_cast<std::size_t>(tb.batch) * tb.len, 0);
  for (int b = 0; b < tb.batch; ++b) {
    for (std::size_t l = 0; l < rows[static_cast<std::size_t>(b)].size(); ++l) {
      tb.ids[static_cast<std::size_t>(b) * tb.len + l] = rows[static_cast<std::size_t>(b)][l];
      tb.valid[static_cast<std::size_t>(b) * tb.len + l] = 1;
    }
  }
  return tb;
}

int TokenBatch::valid_count(int b) const {
  int n = 0;
  for (int l = 0; l < len; ++l) {
    if (is_valid(b, l)) ++n;
  }
  return n;
}

std::vector<std::int32_t> TokenBatch::row(int b) const {
  std::vector<std::int32_t> out;
  for (int l = 0; l < len; ++l) {
    if (is_valid(b, l)) out.push_back(id(b, l));
  }
  return out;
}

MaskResult mask_tokens(const TokenBatch& batch, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw DataError("mask ratio must lie in [0,1], got " + std::to_string(ratio));
  }
  MaskResult r;
  r.masked = batch;
  r.targets = batch;
  std::vector<int> content;
  for (int b = 0; b < batch.batch; ++b) {
    content.clear();
    for (int l = 0; l < batch.len; ++l) {
      if (batch.is_valid(b, l) && !Vocab::is_reserved(batch.id(b, l))) content.push_back(l);
    }
    const int n_mask = static_cast<int>(std::llround(ratio * static_cast<double>(content.size())));
    // partial Fisher-Yates picks n_mask distinct positions
    for (int i = 0; i < n_mask; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(content.size() - i));
      std::swap(content[static_cast<std::size_t>(i)], content[j]);
      r.masked.id(b, content[static_cast<std::size_t>(i)]) = Vocab::kMask;
    }
  }
  return r;
}

std::vector<std::uint8_t> masked_positions(const MaskResult& r) {
  std::vector<std::uint8_t> out(r.masked.ids.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = r.masked.ids[i] != r.targets.ids[i] ? 1 : 0;
  }
  return out;
}

namespace {

double cosine(const double* a, const double* b, int d) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < d; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<int> mine_hard_negative_indices(const Tensor& pool_embeddings,
                                            const Tensor& query_embedding,
                                            const std::vector<std::uint8_t>& eligible,
                                            int count) {
  if (pool_embeddings.rank() != 2) {
    throw ShapeError("pool embeddings must be (N,d), got " + pool_embeddings.shape_str());
  }
  const int n = pool_embeddings.dim(0), d = pool_embeddings.dim(1);
  if (query_embedding.numel() != static_cast<std::size_t>(d)) {
    throw ShapeError("query embedding dimension mismatch");
  }
  if (eligible.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("eligibility mask length mismatch");
  }
  if (count == 0) return {};
  if (count < 0) throw DataError("negative count in hard-negative mining");
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < n; ++i) {
    if (!eligible[static_cast<std::size_t>(i)]) continue;
    scored.emplace_back(
        cosine(pool_embeddings.data.data() + static_cast<std::size_t>(i) * d,
               query_embedding.data.data(), d),
        i);
  }
  if (static_cast<int>(scored.size()) < count) {
    throw DataError("hard-negative pool too small: " + std::to_string(scored.size()) +
                    " eligible < " + std::to_string(count) + " requested");
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  return out;
}

std::vector<std::string> mine_hard_negatives(const std::vector<std::string>& pool_texts,
                                             const Tensor& pool_embeddings,
                                             const Tensor& query_embedding,
                                             const std::string& positive, int count) {
  std::vector<std::uint8_t> eligible(pool_texts.size(), 1);
  for (std::size_t i = 0; i < pool_texts.size(); ++i) {
    if (pool_texts[i] == positive) eligible[i] = 0;
  }
  auto idx = mine_hard_negative_indices(pool_embeddings, query_embedding, eligible, count);
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(pool_texts[static_cast<std::size_t>(i)]);
  return out;
}

Tensor bag_of_tokens_embedding(const Vocab& vocab, const std::string& text) {
  Tensor t = Tensor::zeros({vocab.size()});
  for (std::int32_t id : vocab.encode(text)) t.data[static_cast<std::size_t>(id)] += 1.0;
  return t;
}

// ---- JSONL ----

namespace {

template <typename Rec, typename FromJson>
std::vector<Rec> read_jsonl(const std::string& path, FromJson from) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Rec> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      out.push_back(from(j));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename Rec, typename ToJson>
void write_jsonl(const std::string& path, const std::vector<Rec>& recs, ToJson to) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : recs) out << to(r).dump() << "\n";
}

}  // namespace

std::vector<AlignmentRecord> read_alignment_jsonl(const std::string& path) {
  return read_jsonl<AlignmentRecord>(path, [](const json& j) {
    return AlignmentRecord{j.at("text").get<std::string>(), j.at("lang").get<std::string>()};
  });
}

void write_alignment_jsonl(const std::string& path, const std::vector<AlignmentRecord>& recs) {
  write_jsonl(path, recs, [](const AlignmentRecord& r) {
    return json{{"text", r.text}, {"lang", r.lang}};
  });
}

std::vector<ContrastiveRecord> read_contrastive_jsonl(const std::string& path) {
  return read_jsonl<ContrastiveRecord>(path, [](const json& j) {
    ContrastiveRecord r;
    r.query = j.at("query").get<std::string>();
    r.positive = j.at("positive").get<std::string>();
    r.negatives = j.at("negatives").get<std::vector<std::string>>();
    r.lang = j.at("lang").get<std::string>();
    return r;
  });
}

void write_contrastive_jsonl(const std::string& path, const std::vector<ContrastiveRecord>& recs) {
  write_jsonl(path, recs, [](const ContrastiveRecord& r) {
    return json{{"query", r.query},
                {"positive", r.positive},
                {"negatives", r.negatives},
                {"lang", r.lang}};
  });
}

std::vector<RetrievalQueryRecord> read_retrieval_queries_jsonl(const std::string& path) {
  return read_jsonl<RetrievalQueryRecord>(path, [](const json& j) {
    return RetrievalQueryRecord{j.at("query").get<std::string>(),
                                j.at("relevant_ids").get<std::vector<int>>()};
  });
}

void write_retrieval_queries_jsonl(const std::string& path,
                                   const std::vector<RetrievalQueryRecord>& recs) {
  write_jsonl(path, recs, [](const RetrievalQueryRecord& r) {
    return json{{"query", r.query}, {"relevant_ids", r.relevant_ids}};
  });
}

std::vector<CorpusDocRecord> read_corpus_jsonl(const std::string& path) {
  return read_jsonl<CorpusDocRecord>(path, [](const json& j) {
    return CorpusDocRecord{j.at("id").get<int>(), j.at("text").get<std::string>()};
  });
}

void write_corpus_jsonl(const std::string& path, const std::vector<CorpusDocRecord>& recs) {
  write_jsonl(path, recs, [](const CorpusDocRecord& r) {
    return json{{"id", r.id}, {"text", r.text}};
  });
}

std::vector<StsRecord> read_sts_jsonl(const std::string& path) {
  return read_jsonl<StsRecord>(path, [](const json& j) {
    return StsRecord{j.at("s1").get<std::string>(), j.at("s2").get<std::string>(),
                     j.at("score").get<double>()};
  });
}

void write_sts_jsonl(const std::string& path, const std::vector<StsRecord>& recs) {
  write_jsonl(path, recs, [](const StsRecord& r) {
    return json{{"s1", r.s1}, {"s2", r.s2}, {"score", r.score}};
  });
}

std::vector<LabeledTextRecord> read_labeled_jsonl(const std::string& path) {
  return read_jsonl<LabeledTextRecord>(path, [](const json& j) {
    return LabeledTextRecord{j.at("text").get<std::string>(), j.at("label").get<int>()};
  });
}

void write_labeled_jsonl(const std::string& path, const std::vector<LabeledTextRecord>& recs) {
  write_jsonl(path, recs, [](const LabeledTextRecord& r) {
    return json{{"text", r.text}, {"label", r.label}};
  });
}

std::vector<ClusterRecord> read_cluster_jsonl(const std::string& path) {
  return read_jsonl<ClusterRecord>(path, [](const json& j) {
    return ClusterRecord{j.at("text").get<std::string>(), j.at("cluster").get<int>()};
  });
}

void write_cluster_jsonl(const std::string& path, const std::vector<ClusterRecord>& recs) {
  write_jsonl(path, recs, [](const ClusterRecord& r) {
    return json{{"text", r.text}, {"cluster", r.cluster}};
  });
}

std::vector<RerankRecord> read_rerank_jsonl(const std::string& path) {
  return read_jsonl<RerankRecord>(path, [](const json& j) {
    RerankRecord r;
    r.query = j.at("query").get<std::string>();
    r.candidates = j.at("candidates").get<std::vector<std::string>>();
    r.relevance = j.at("relevance").get<std::vector<int>>();
    if (r.candidates.size() != r.relevance.size()) {
      throw DataError("reranking record: candidates/relevance length mismatch");
    }
    return r;
  });
}

void write_rerank_jsonl(const std::string& path, const std::vector<RerankRecord>& recs) {
  write_jsonl(path, recs, [](const RerankRecord& r) {
    return json{{"query", r.query}, {"candidates", r.candidates}, {"relevance", r.relevance}};
  });
}

}  // namespace lusifer
