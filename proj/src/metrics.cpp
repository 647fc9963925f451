// SPDX-License-Identifier: Apache-2.0
#include "lusifer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace lusifer {

RankedList make_ranked_list(int query_id, const std::vector<int>& ids,
                            const std::vector<double>& scores) {
  if (ids.size() != scores.size()) throw ShapeError("ranked list ids/scores length mismatch");
  RankedList r;
  r.query_id = query_id;
  r.items.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) r.items.emplace_back(ids[i], scores[i]);
  std::sort(r.items.begin(), r.items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 1; i < r.items.size(); ++i) {
    if (r.items[i].first == r.items[i - 1].first) {
      throw DataError("duplicate candidate id " + std::to_string(r.items[i].first) +
                      " in ranked list");
    }
  }
  return r;
}

double ndcg_at_k(const RankedList& ranked, const std::set<int>& relevant, int k) {
  if (ranked.items.empty()) throw DataError("nDCG of an empty ranking");
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  const int depth = std::min<int>(k, static_cast<int>(ranked.items.size()));
  for (int i = 0; i < depth; ++i) {
    if (relevant.count(ranked.items[static_cast<std::size_t>(i)].first)) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  double idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
  for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

double average_precision(const std::vector<int>& relevance) {
  double ap = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (relevance[i] > 0) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) return -1.0;
  return ap / hits;
}

MapResult map_reranking(const std::vector<std::vector<int>>& relevance_lists) {
  MapResult out;
  double sum = 0.0;
  for (const auto& flags : relevance_lists) {
    const double ap = average_precision(flags);
    if (ap < 0) {
      ++out.skipped;
      continue;
    }
    sum += ap;
    ++out.evaluated;
  }
  if (out.evaluated > 0) out.map = sum / out.evaluated;
  return out;
}

namespace {

// H(labels) and H(labels | cond) from joint counts, natural log.
double entropy(const std::map<int, int>& counts, int n) {
  double h = 0.0;
  for (const auto& [label, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double conditional_entropy(const std::vector<int>& labels, const std::vector<int>& cond) {
  std::map<int, std::map<int, int>> per;  // cond value -> label counts
  std::map<int, int> cond_counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++per[cond[i]][labels[i]];
    ++cond_counts[cond[i]];
  }
  const int n = static_cast<int>(labels.size());
  double h = 0.0;
  for (const auto& [cv, label_counts] : per) {
    const double w = static_cast<double>(cond_counts[cv]) / n;
    h += w * entropy(label_counts, cond_counts[cv]);
  }
  return h;
}

}  // namespace

double v_measure(const std::vector<int>& true_labels, const std::vector<int>& predicted_labels) {
  if (true_labels.empty()) throw DataError("v_measure of empty label lists");
  if (true_labels.size() != predicted_labels.size()) {
    throw DataError("v_measure label list length mismatch");
  }
  const int n = static_cast<int>(true_labels.size());
  std::map<int, int> cc, kc;
  for (int l : true_labels) ++cc[l];
  for (int l : predicted_labels) ++kc[l];
  const double h_c = entropy(cc, n);
  const double h_k = entropy(kc, n);
  const double h_c_given_k = conditional_entropy(true_labels, predicted_labels);
  const double h_k_given_c = conditional_entropy(predicted_labels, true_labels);
  const double h = h_c == 0.0 ? 1.0 : 1.0 - h_c_given_k / h_c;
  const double c = h_k == 0.0 ? 1.0 : 1.0 - h_k_given_c / h_k;
  if (h + c == 0.0) return 0.0;
  return 2.0 * h * c / (h + c);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("pearson input length mismatch");
  if (x.size() < 2) throw DataError("pearson needs at least 2 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson undefined for constant series");
  return sxy / std::sqrt(sxx * syy);
}

double cosine_similarity(const double* a, const double* b, int dim) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < dim; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

int knn_predict(const Tensor& train, const std::vector<int>& train_labels, const double* row,
                int dim, int k) {
  const int n = train.dim(0);
  std::vector<std::pair<double, int>> scored;  // (similarity, train index)
  scored.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    scored.emplace_back(cosine_similarity(train.data.data() + static_cast<std::size_t>(i) * dim,
                                          row, dim),
                        i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::map<int, int> votes;
  std::map<int, double> sim_sum;
  for (int i = 0; i < k; ++i) {
    const int label = train_labels[static_cast<std::size_t>(scored[static_cast<std::size_t>(i)].second)];
    ++votes[label];
    sim_sum[label] += scored[static_cast<std::size_t>(i)].first;
  }
  int best = -1;
  for (const auto& [label, v] : votes) {
    if (best < 0) {
      best = label;
      continue;
    }
    const int bv = votes[best];
    if (v > bv || (v == bv && sim_sum[label] > sim_sum[best])) best = label;
    // equal votes and equal similarity keep the lower label id (map order)
  }
  return best;
}

double knn_accuracy(const Tensor& train, const std::vector<int>& train_labels, const Tensor& test,
                    const std::vector<int>& test_labels, int k) {
  if (train.rank() != 2 || test.rank() != 2 || train.dim(1) != test.dim(1)) {
    throw ShapeError("knn embeddings must be (N,d) with matching d");
  }
  if (train.dim(0) == 0) throw DataError("knn with empty train set");
  if (train_labels.size() != static_cast<std::size_t>(train.dim(0)) ||
      test_labels.size() != static_cast<std::size_t>(test.dim(0))) {
    throw DataError("knn label count mismatch");
  }
  if (k > train.dim(0)) {
    std::cerr << "warning: knn k=" << k << " exceeds train size " << train.dim(0)
              << "; clamping\n";
    k = train.dim(0);
  }
  const int dim = train.dim(1);
  int correct = 0;
  for (int i = 0; i < test.dim(0); ++i) {
    const int pred = knn_predict(train, train_labels,
                                 test.data.data() + static_cast<std::size_t>(i) * dim, dim, k);
    if (pred == test_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return test.dim(0) == 0 ? 0.0 : static_cast<double>(correct) / test.dim(0);
}

}  // namespace lusifer
