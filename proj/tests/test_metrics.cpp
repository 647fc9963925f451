// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "lusifer/kmeans.hpp"
#include "lusifer/metrics.hpp"
#include "lusifer/rng.hpp"

using namespace lusifer;

namespace {

// direct-definition oracle: DCG over explicit ranks
double ndcg_oracle(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k) {
  if (relevant.empty()) return 0.0;
  double dcg = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(ranked_ids.size())); ++i) {
    if (relevant.count(ranked_ids[static_cast<std::size_t>(i)])) {
      dcg += 1.0 / std::log2(i + 2.0);
    }
  }
  double idcg = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(relevant.size())); ++i) {
    idcg += 1.0 / std::log2(i + 2.0);
  }
  return dcg / idcg;
}

// entropy-formula oracle for V-measure, written independently of metrics.cpp
double v_measure_oracle(const std::vector<int>& truth, const std::vector<int>& pred) {
  const int n = static_cast<int>(truth.size());
  auto H = [n](const std::vector<int>& labels) {
    std::map<int, int> c;
    for (int l : labels) ++c[l];
    double h = 0;
    for (auto& [l, k] : c) {
      double p = static_cast<double>(k) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  auto Hcond = [n](const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, int> joint;
    std::map<int, int> bc;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ++joint[{b[i], a[i]}];
      ++bc[b[i]];
    }
    double h = 0;
    for (auto& [key, k] : joint) {
      double p = static_cast<double>(k) / n;
      h -= p * std::log(static_cast<double>(k) / bc[key.first]);
    }
    return h;
  };
  const double hc = H(truth), hk = H(pred);
  const double h = hc == 0 ? 1.0 : 1.0 - Hcond(truth, pred) / hc;
  const double c = hk == 0 ? 1.0 : 1.0 - Hcond(pred, truth) / hk;
  return h + c == 0 ? 0.0 : 2 * h * c / (h + c);
}

}  // namespace

TEST_CASE("nDCG worked values") {
  // relevant docs at ranks 1 and 3, two relevant in total
  RankedList r = make_ranked_list(0, {7, 8, 9, 10}, {0.9, 0.8, 0.7, 0.6});
  const double got = ndcg_at_k(r, {7, 9}, 10);
  const double dcg = 1.0 / std::log2(2.0) + 1.0 / std::log2(4.0);   // 1.5
  const double idcg = 1.0 / std::log2(2.0) + 1.0 / std::log2(3.0);  // 1.63093
  CHECK(got == doctest::Approx(dcg / idcg).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.9197).epsilon(1e-4));

  CHECK(ndcg_at_k(make_ranked_list(0, {1, 2, 3}, {3, 2, 1}), {1, 2, 3}, 10) ==
        doctest::Approx(1.0));
  // relevant docs exist but none retrieved in the top 10
  std::vector<int> ids;
  std::vector<double> scores;
  for (int i = 0; i < 12; ++i) {
    ids.push_back(i);
    scores.push_back(-i);
  }
  CHECK(ndcg_at_k(make_ranked_list(0, ids, scores), {11}, 10) == doctest::Approx(0.0));
  // no relevant docs at all
  CHECK(ndcg_at_k(make_ranked_list(0, {1}, {1.0}), {}, 10) == doctest::Approx(0.0));
}

TEST_CASE("ranked list ordering and duplicate rejection") {
  RankedList r = make_ranked_list(3, {5, 2, 9}, {0.5, 0.5, 0.9});
  CHECK(r.items[0].first == 9);
  CHECK(r.items[1].first == 2);  // tie broken by lower id
  CHECK(r.items[2].first == 5);
  CHECK_THROWS_AS((void)make_ranked_list(0, {1, 1}, {0.1, 0.2}), DataError);
}

TEST_CASE("average precision and MAP") {
  CHECK(average_precision({1, 0, 1, 0}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(average_precision({1, 0, 1, 0}) == doctest::Approx(0.8333).epsilon(1e-4));
  CHECK(average_precision({1, 1, 1}) == doctest::Approx(1.0));
  for (int r = 1; r <= 6; ++r) {
    std::vector<int> flags(6, 0);
    flags[static_cast<std::size_t>(r - 1)] = 1;
    CHECK(average_precision(flags) == doctest::Approx(1.0 / r).epsilon(1e-12));
  }
  auto res = map_reranking({{1, 0}, {0, 0}, {0, 1}});
  CHECK(res.evaluated == 2);
  CHECK(res.skipped == 1);
  CHECK(res.map == doctest::Approx((1.0 + 0.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("V-measure worked values and conventions") {
  CHECK(v_measure({0, 0, 1, 1}, {5, 5, 9, 9}) == doctest::Approx(1.0));  // relabeling
  CHECK(v_measure({0, 0, 1, 1}, {2, 2, 2, 2}) == doctest::Approx(0.0).epsilon(1e-12));
  const double v = v_measure({0, 0, 1, 1}, {1, 1, 1, 2});
  CHECK(v == doctest::Approx(v_measure_oracle({0, 0, 1, 1}, {1, 1, 1, 2})).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.344).epsilon(2e-3));
  CHECK_THROWS_AS((void)v_measure({}, {}), DataError);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(28));
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(rng.below(4)));
      pred.push_back(static_cast<int>(rng.below(4)));
    }
    const double got = v_measure(truth, pred);
    CHECK(std::fabs(got - v_measure_oracle(truth, pred)) <= 1e-9);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0 + 1e-12);
  }
}

TEST_CASE("Pearson correlation") {
  CHECK(pearson({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0));
  const double r = pearson({1, 2, 3}, {1, 2, 4});
  CHECK(r == doctest::Approx(3.0 / std::sqrt(2.0 * (14.0 / 3.0))).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.9820).epsilon(1e-4));
  CHECK_THROWS_AS((void)pearson({1, 1, 1}, {1, 2, 3}), DataError);
  CHECK_THROWS_AS((void)pearson({1}, {2}), DataError);
}

TEST_CASE("knn accuracy against a brute-force oracle") {
  Rng rng(9);
  SUBCASE("identical train point wins at k=1") {
    Tensor train = Tensor::from({3, 2}, {1, 0, 0, 1, -1, 0});
    Tensor test = Tensor::from({1, 2}, {0, 1});
    CHECK(knn_accuracy(train, {4, 7, 9}, test, {7}, 1) == doctest::Approx(1.0));
  }
  SUBCASE("random labels over two balanced classes sit near 0.5") {
    const int n_train = 60, n_test = 500, d = 6;
    Tensor train = Tensor::zeros({n_train, d}), test = Tensor::zeros({n_test, d});
    for (auto& x : train.data) x = rng.normal();
    for (auto& x : test.data) x = rng.normal();
    std::vector<int> trl, tel;
    for (int i = 0; i < n_train; ++i) trl.push_back(i % 2);
    for (int i = 0; i < n_test; ++i) tel.push_back(static_cast<int>(rng.below(2)));
    const double acc = knn_accuracy(train, trl, test, tel, 5);
    CHECK(acc > 0.4);
    CHECK(acc < 0.6);
  }
  SUBCASE("matches an independently-written neighbor scan") {
    for (int trial = 0; trial < 30; ++trial) {
      const int n_train = 5 + static_cast<int>(rng.below(20));
      const int d = 3, k = 1 + static_cast<int>(rng.below(4));
      Tensor train = Tensor::zeros({n_train, d});
      for (auto& x : train.data) x = rng.normal();
      std::vector<int> labels;
      for (int i = 0; i < n_train; ++i) labels.push_back(static_cast<int>(rng.below(3)));
      Tensor probe = Tensor::zeros({1, d});
      for (auto& x : probe.data) x = rng.normal();

      // oracle: full sort of (cos, idx), then vote with the same tie rules
      std::vector<std::pair<double, int>> all;
      for (int i = 0; i < n_train; ++i) {
        all.emplace_back(cosine_similarity(train.data.data() + static_cast<std::size_t>(i) * d,
                                           probe.data.data(), d),
                         i);
      }
      std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::map<int, std::pair<int, double>> votes;  // label -> (count, sim sum)
      for (int i = 0; i < k; ++i) {
        auto& v = votes[labels[static_cast<std::size_t>(all[static_cast<std::size_t>(i)].second)]];
        v.first += 1;
        v.second += all[static_cast<std::size_t>(i)].first;
      }
      int expect = -1;
      for (auto& [label, v] : votes) {
        if (expect < 0) {
          expect = label;
          continue;
        }
        auto& b = votes[expect];
        if (v.first > b.first || (v.first == b.first && v.second > b.second)) expect = label;
      }
      CHECK(knn_predict(train, labels, probe.data.data(), d, k) == expect);
    }
  }
  SUBCASE("k larger than the train set is clamped") {
    Tensor train = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor test = Tensor::from({1, 2}, {1, 0.1});
    CHECK(knn_accuracy(train, {3, 3}, test, {3}, 99) == doctest::Approx(1.0));
  }
}

TEST_CASE("kmeans clustering eval") {
  SUBCASE("two separated blobs recover perfectly") {
    Rng rng(12);
    const int per = 20, d = 4;
    Tensor pts = Tensor::zeros({2 * per, d});
    std::vector<int> labels;
    for (int i = 0; i < 2 * per; ++i) {
      const int c = i < per ? 0 : 1;
      labels.push_back(c);
      for (int j = 0; j < d; ++j) {
        pts.at2(i, j) = (c == 0 ? -3.0 : 3.0) + 0.3 * rng.normal();
      }
    }
    CHECK(clustering_eval(pts, labels, 2, 7) >= 0.95);
  }
  SUBCASE("k equal to point count gives singleton clusters") {
    Rng rng(13);
    const int n = 8;
    Tensor pts = Tensor::zeros({n, 3});
    for (auto& x : pts.data) x = rng.normal();
    std::vector<int> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    Rng krng(derive_seed(7, "kmeans"));
    auto km = kmeans(pts, n, krng, 10);
    // every point gets its own cluster; V equals the entropy-formula oracle
    std::set<int> distinct(km.assignment.begin(), km.assignment.end());
    CHECK(distinct.size() == static_cast<std::size_t>(n));
    CHECK(v_measure(labels, km.assignment) ==
          doctest::Approx(v_measure_oracle(labels, km.assignment)).epsilon(1e-12));
    // homogeneity is perfect, completeness is not
    CHECK(v_measure(labels, km.assignment) < 1.0);
    CHECK(v_measure(km.assignment, km.assignment) == doctest::Approx(1.0));
  }
  SUBCASE("identical points collapse to one effective cluster") {
    Tensor pts = Tensor::zeros({6, 3});
    std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    const double v = clustering_eval(pts, labels, 3, 11);
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("k out of range is rejected") {
    Tensor pts = Tensor::zeros({3, 2});
    Rng rng(1);
    CHECK_THROWS_AS((void)kmeans(pts, 4, rng), DataError);
  }
}

TEST_CASE("metric oracle sweep over random instances") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(30));
    std::vector<int> ids;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      ids.push_back(i);
      scores.push_back(rng.below(6) == 0 ? 0.5 : rng.next_double());  // some ties
    }
    std::set<int> relevant;
    for (int i = 0; i < n; ++i) {
      if (rng.below(4) == 0) relevant.insert(i);
    }
    RankedList r = make_ranked_list(0, ids, scores);
    std::vector<int> rank_order;
    std::vector<int> flags;
    for (auto& [id, s] : r.items) {
      rank_order.push_back(id);
      flags.push_back(relevant.count(id) ? 1 : 0);
    }
    const double got = ndcg_at_k(r, relevant, 10);
    CHECK(std::fabs(got - ndcg_oracle(rank_order, relevant, 10)) <= 1e-9);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0 + 1e-12);

    const double ap = average_precision(flags);
    if (!relevant.empty()) {
      // oracle: mean over relevant positions of precision-at-that-position
      double expect = 0;
      int hits = 0;
      for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) {
          ++hits;
          expect += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
      }
      expect /= static_cast<double>(hits);
      CHECK(std::fabs(ap - expect) <= 1e-9);
    } else {
      CHECK(ap == -1.0);
    }
  }
}
