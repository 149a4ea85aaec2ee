#include "gm/graph.hpp"

#include <algorithm>
#include <cmath>

#include "gm/mathkit.hpp"

namespace gm {

std::vector<int> Graph::edge_index() const {
    std::vector<int> idx(n * n, -1);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        idx[static_cast<std::size_t>(edges[e].first) * n + edges[e].second] =
            static_cast<int>(e);
    }
    return idx;
}

Graph knn_graph(const Tensor& z, std::size_t k, KnnMetric metric) {
    if (z.rank() != 2) throw DomainError("knn_graph expects an N x F matrix");
    const std::size_t n = z.extent(0);
    const std::size_t f = z.extent(1);
    if (k < 1 || k >= n) {
        throw DomainError("knn_graph requires 1 <= k <= N-1, got k=" +
                          std::to_string(k) + ", N=" + std::to_string(n));
    }
    Graph g;
    g.n = n;
    g.edges.reserve(n * k);
    std::vector<std::pair<double, int>> dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        dists.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d;
            if (metric == KnnMetric::Euclidean) {
                double sq = 0.0;
                for (std::size_t c = 0; c < f; ++c) {
                    const double diff =
                        static_cast<double>(z.at2(i, c)) - z.at2(j, c);
                    sq += diff * diff;
                }
                d = sq;
            } else {
                d = 1.0 - cosine_sim({z.data() + i * f, f}, {z.data() + j * f, f})
                              .value;
            }
            dists.emplace_back(d, static_cast<int>(j));
        }
        // ties resolved toward the lower node index
        std::partial_sort(dists.begin(), dists.begin() + static_cast<long>(k),
                          dists.end());
        std::sort(dists.begin(), dists.begin() + static_cast<long>(k),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        for (std::size_t e = 0; e < k; ++e) {
            g.edges.emplace_back(static_cast<int>(i), dists[e].second);
        }
    }
    return g;
}

}  // namespace gm
