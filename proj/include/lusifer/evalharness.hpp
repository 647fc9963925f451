// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lusifer/metrics.hpp"
#include "lusifer/model.hpp"

namespace lusifer {

struct ReportRow {
  std::string task;
  std::string language;
  std::string dataset;
  std::string metric;
  double value = 0.0;
};

struct EvalOptions {
  int knn_k = 5;
  int kmeans_restarts = 10;
  std::uint64_t seed = 42;
  int batch_size = 64;
};

// Texts -> (N, d) embedding matrix.
using EmbedFn = std::function<Tensor(const std::vector<std::string>&)>;

EmbedFn model_embedder(const Model& model, const Vocab& vocab, int batch_size = 64);
// Baseline: token embeddings fed directly into the target LM, no encoder or
// connector in the path.
EmbedFn lm_only_embedder(const Model& model, const Vocab& vocab, int batch_size = 64);
// Baseline: a unit Gaussian vector seeded by the text content.
EmbedFn random_embedder(int dim, std::uint64_t seed);

// Exact brute-force cosine ranking of every document for every query;
// deterministic tie-breaking by lower document id.
std::vector<RankedList> retrieval_run(const Tensor& query_embeddings,
                                      const Tensor& doc_embeddings,
                                      const std::vector<int>& doc_ids);

// Runs the five tasks found under `lang_dir` and returns one row per task.
std::vector<ReportRow> run_language_suite(const EmbedFn& embed, const std::string& lang_dir,
                                          const std::string& lang, const EvalOptions& opts);

// Unweighted mean of the five task metrics for one language.
double mean_task_score(const std::vector<ReportRow>& rows, const std::string& language);

// Appends aggregate rows: per-language macro means over tasks and over
// datasets (labelled separately), plus overall means.
std::vector<ReportRow> with_aggregates(std::vector<ReportRow> rows);

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);
std::string report_summary_table(const std::vector<ReportRow>& rows);

struct TransferSystemScores {
  std::string system;  // "model" | "lm_only_baseline" | "random_baseline"
  std::vector<ReportRow> rows;
  double retrieval_ndcg = 0.0;
  double mean_score = 0.0;
};

// The zero-shot transfer experiment on one held-out language: the full model
// against (a) the random-embedding baseline and (b) the target-LM-only
// baseline. System names land in the report's dataset column.
struct TransferReport {
  std::string language;
  std::vector<TransferSystemScores> systems;
  const TransferSystemScores& system(const std::string& name) const;
  std::vector<ReportRow> all_rows() const;
};

TransferReport zero_shot_transfer_eval(const Model& model, const Vocab& vocab,
                                       const std::string& data_dir,
                                       const std::string& held_out_lang, const EvalOptions& opts);

// CSV rows: id, language tag, label, then the embedding columns.
void export_embeddings_csv(const std::string& out_path, const EmbedFn& embed,
                           const std::vector<std::string>& texts, const std::vector<int>& labels,
                           const std::string& lang);

}  // namespace lusifer
