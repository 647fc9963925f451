// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <vector>

#include "lusifer/tensor.hpp"

namespace lusifer {

// Candidates ordered by (score desc, id asc); ids unique.
struct RankedList {
  int query_id = 0;
  std::vector<std::pair<int, double>> items;  // (candidate id, score)
};

RankedList make_ranked_list(int query_id, const std::vector<int>& ids,
                            const std::vector<double>& scores);

// Binary-gain nDCG: DCG = sum_{rank<=k} rel/log2(rank+1), normalized by the
// ideal DCG; 0 when no relevant documents exist.
double ndcg_at_k(const RankedList& ranked, const std::set<int>& relevant, int k = 10);

// Average precision of one binary-relevance ranking (flags in rank order).
// Returns -1 when the query has no relevant candidate (callers skip it).
double average_precision(const std::vector<int>& relevance_in_rank_order);

struct MapResult {
  double map = 0.0;
  int evaluated = 0;
  int skipped = 0;  // queries with zero relevant candidates
};
MapResult map_reranking(const std::vector<std::vector<int>>& relevance_lists);

// Rosenberg-Hirschberg V-measure. Conventions: h=1 when H(C)=0, c=1 when
// H(K)=0, V=0 when h+c=0. Throws DataError on empty input.
double v_measure(const std::vector<int>& true_labels, const std::vector<int>& predicted_labels);

// Pearson correlation; requires >=2 pairs and non-constant series.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Cosine k-NN majority vote; ties broken by summed similarity, then lower
// label id. k is clamped (with a warning) when it exceeds the train size.
double knn_accuracy(const Tensor& train_embeddings, const std::vector<int>& train_labels,
                    const Tensor& test_embeddings, const std::vector<int>& test_labels, int k = 5);
int knn_predict(const Tensor& train_embeddings, const std::vector<int>& train_labels,
                const double* test_row, int dim, int k);

double cosine_similarity(const double* a, const double* b, int dim);

}  // namespace lusifer
