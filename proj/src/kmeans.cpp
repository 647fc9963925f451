// SPDX-License-Identifier: Apache-2.0
#include "lusifer/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lusifer/metrics.hpp"

namespace lusifer {

namespace {

double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double c = a[i] - b[i];
    s += c * c;
  }
  return s;
}

KMeansResult lloyd_once(const Tensor& pts, int k, Rng& rng, int max_iters) {
  const int n = pts.dim(0), d = pts.dim(1);
  const double* data = pts.data.data();

  // k-means++ seeding
  std::vector<double> centroids(static_cast<std::size_t>(k) * d);
  std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  {
    const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    std::copy_n(data + static_cast<std::size_t>(first) * d, d, centroids.begin());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        min_d2[static_cast<std::size_t>(i)] =
            std::min(min_d2[static_cast<std::size_t>(i)],
                     sq_dist(data + static_cast<std::size_t>(i) * d,
                             centroids.data() + static_cast<std::size_t>(c - 1) * d, d));
        total += min_d2[static_cast<std::size_t>(i)];
      }
      int chosen = n - 1;
      if (total > 0.0) {
        double r = rng.next_double() * total;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += min_d2[static_cast<std::size_t>(i)];
          if (acc >= r) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      }
      std::copy_n(data + static_cast<std::size_t>(chosen) * d, d,
                  centroids.begin() + static_cast<std::size_t>(c) * d);
    }
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = sq_dist(data + static_cast<std::size_t>(i) * d,
                                  centroids.data() + static_cast<std::size_t>(c) * d, d);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];

    // re-seed an emptied cluster with the point farthest from its centroid;
    // when every point already sits on its centroid (duplicate degeneracy)
    // the cluster stays empty
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      int farthest = -1;
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] <= 1) continue;
        const double dd = sq_dist(data + static_cast<std::size_t>(i) * d,
                                  centroids.data() +
                                      static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]) * d,
                                  d);
        if (dd > worst) {
          worst = dd;
          farthest = i;
        }
      }
      if (farthest < 0) continue;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(farthest)])];
      assign[static_cast<std::size_t>(farthest)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }

    std::fill(centroids.begin(), centroids.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      double* cent = centroids.data() + static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]) * d;
      const double* row = data + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) cent[j] += row[j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // stays at the origin
      double* cent = centroids.data() + static_cast<std::size_t>(c) * d;
      for (int j = 0; j < d; ++j) cent[j] /= counts[static_cast<std::size_t>(c)];
    }
    if (!changed) break;
  }

  KMeansResult result;
  result.assignment = std::move(assign);
  result.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    result.inertia += sq_dist(data + static_cast<std::size_t>(i) * d,
                              centroids.data() +
                                  static_cast<std::size_t>(result.assignment[static_cast<std::size_t>(i)]) * d,
                              d);
  }
  return result;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, int k, Rng& rng, int restarts, int max_iters) {
  if (points.rank() != 2) throw ShapeError("kmeans points must be (N,d)");
  const int n = points.dim(0);
  if (k < 1 || k > n) {
    throw DataError("kmeans needs 1 <= k <= n, got k=" + std::to_string(k) + " n=" +
                    std::to_string(n));
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult cur = lloyd_once(points, k, rng, max_iters);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

double clustering_eval(const Tensor& embeddings, const std::vector<int>& labels, int n_clusters,
                       std::uint64_t seed, int restarts) {
  if (labels.size() != static_cast<std::size_t>(embeddings.dim(0))) {
    throw DataError("clustering_eval label count mismatch");
  }
  Rng rng(derive_seed(seed, "kmeans"));
  KMeansResult km = kmeans(embeddings, n_clusters, rng, restarts);
  return v_measure(labels, km.assignment);
}

}  // namespace lusifer
