#pragma once

#include <vector>

#include "gm/graph.hpp"
#include "gm/matcher.hpp"
#include "gm/rng.hpp"
#include "gm/synth.hpp"
#include "gm/tensor.hpp"

namespace gm {

/// Frozen discrete choices of one local_cost evaluation; the backward pass
/// treats them as constants (straight-through).
struct LocalCostCache {
    std::vector<int> loc_nn;    // per source cell: location-NN target cell
    std::vector<int> feat_nn;   // per source cell: feature-NN target cell
    std::vector<int> loc_sel;   // selected source cells, ascending
    std::vector<int> feat_sel;
};

/// One feature map of a ViewBatch item: y is a D x R x S block, pos R x S x 2.
struct ItemView {
    const float* y;
    const float* pos;
    std::size_t D, R, S;
};

ItemView item_view(const ViewBatch& vb, std::size_t item);

/// 0.5 * (location-branch cosine + feature-branch cosine) over the top-gamma
/// selected cell correspondences.
double local_cost(const ItemView& yi, const ItemView& ya, std::size_t gamma,
                  LocalCostCache& cache);

/// Gradient of upstream * local_cost w.r.t. both feature maps, NN indices and
/// selections frozen from the cache.
void local_cost_backward(const ItemView& yi, const ItemView& ya,
                         const LocalCostCache& cache, double upstream,
                         float* dyi, float* dya);

struct AffinityCaches {
    std::vector<LocalCostCache> local;  // N x N row-major, empty when alpha == 1
    std::size_t n = 0;
};

/// cv[i,a] = alpha * cos(zhat_s_i, zhat_t_a) + (1-alpha) * local_cost(...);
/// ce[(i,j),(a,b)] = cos(zhat_s_i - zhat_s_j, zhat_t_a - zhat_t_b).
AffinitySet build_affinities(const Tensor& zhat_s, const Tensor& zhat_t,
                             const ViewBatch& xs, const ViewBatch& xt,
                             const Graph& gs, const Graph& gt, double alpha,
                             std::size_t gamma, AffinityCaches& caches);

/// Elementwise Gumbel(0,1) noise on cv then ce.
AffinitySet perturb(const AffinitySet& affs, RngStream& rng);

struct AffinityGrads {
    Tensor dzs, dzt;  // N x F
    Tensor dys, dyt;  // N x D x R x S
};

AffinityGrads affinity_backward(const Tensor& dcv, const Tensor& dce,
                                const AffinityCaches& caches, const Tensor& zhat_s,
                                const Tensor& zhat_t, const ViewBatch& xs,
                                const ViewBatch& xt, const Graph& gs,
                                const Graph& gt, double alpha);

}  // namespace gm
