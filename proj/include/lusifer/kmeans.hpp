// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lusifer/rng.hpp"
#include "lusifer/tensor.hpp"

namespace lusifer {

struct KMeansResult {
  std::vector<int> assignment;
  double inertia = 0.0;
};

// Seeded k-means: k-means++ initialization, Lloyd iterations, restarts keep
// the lowest inertia. An emptied cluster is re-seeded with the point farthest
// from its current centroid.
KMeansResult kmeans(const Tensor& points, int k, Rng& rng, int restarts = 10,
                    int max_iters = 100);

// Seeded k-means followed by V-measure against the true labels.
double clustering_eval(const Tensor& embeddings, const std::vector<int>& labels, int n_clusters,
                       std::uint64_t seed, int restarts = 10);

}  // namespace lusifer
