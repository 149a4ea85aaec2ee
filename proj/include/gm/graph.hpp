#pragma once

#include <utility>
#include <vector>

#include "gm/tensor.hpp"

namespace gm {

/// Directed kNN graph; out-degree is k for every node, edges sorted
/// lexicographically.
struct Graph {
    std::size_t n = 0;
    std::vector<std::pair<int, int>> edges;

    /// n x n lookup: edge index of (i, j), or -1.
    std::vector<int> edge_index() const;
};

enum class KnnMetric { Euclidean, Cosine };

/// k nearest neighbors per row of Z (N x F); ties broken by lower node index.
Graph knn_graph(const Tensor& z, std::size_t k,
                KnnMetric metric = KnnMetric::Euclidean);

}  // namespace gm
