#include "gm/affinity.hpp"

#include <algorithm>
#include <cmath>

#include "gm/mathkit.hpp"

namespace gm {

ItemView item_view(const ViewBatch& vb, std::size_t item) {
    const std::size_t D = vb.y.extent(1), R = vb.y.extent(2), S = vb.y.extent(3);
    return {vb.y.data() + item * D * R * S, vb.pos.data() + item * R * S * 2, D, R, S};
}

namespace {

// argmin plus per-cell selection distance for one branch
void nearest_cells(const ItemView& yi, const ItemView& ya, bool by_position,
                   std::vector<int>& nn, std::vector<double>& dist) {
    const std::size_t cells = yi.R * yi.S;
    nn.assign(cells, 0);
    dist.assign(cells, 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
        double best = 0.0;
        int best_idx = -1;
        for (std::size_t t = 0; t < cells; ++t) {
            double d = 0.0;
            if (by_position) {
                for (int ax = 0; ax < 2; ++ax) {
                    const double diff = static_cast<double>(yi.pos[c * 2 + ax]) -
                                        ya.pos[t * 2 + ax];
                    d += diff * diff;
                }
            } else {
                for (std::size_t ch = 0; ch < yi.D; ++ch) {
                    const double diff = static_cast<double>(yi.y[ch * cells + c]) -
                                        ya.y[ch * cells + t];
                    d += diff * diff;
                }
            }
            if (best_idx < 0 || d < best) {  // ties resolved to the lower index
                best = d;
                best_idx = static_cast<int>(t);
            }
        }
        nn[c] = best_idx;
        dist[c] = best;
    }
}

std::vector<int> select_top(const std::vector<double>& dist, std::size_t gamma) {
    const std::size_t cells = dist.size();
    std::vector<int> order(cells);
    for (std::size_t c = 0; c < cells; ++c) order[c] = static_cast<int>(c);
    const std::size_t keep = std::min(gamma, cells);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

// cosine of the stacked selected feature vectors
double branch_cost(const ItemView& yi, const ItemView& ya,
                   const std::vector<int>& sel, const std::vector<int>& nn) {
    const std::size_t cells = yi.R * yi.S;
    std::vector<float> u, v;
    u.reserve(sel.size() * yi.D);
    v.reserve(sel.size() * yi.D);
    for (int c : sel) {
        const std::size_t t = static_cast<std::size_t>(nn[static_cast<std::size_t>(c)]);
        for (std::size_t ch = 0; ch < yi.D; ++ch) {
            u.push_back(yi.y[ch * cells + static_cast<std::size_t>(c)]);
            v.push_back(ya.y[ch * cells + t]);
        }
    }
    return cosine_sim(u, v).value;
}

void branch_backward(const ItemView& yi, const ItemView& ya,
                     const std::vector<int>& sel, const std::vector<int>& nn,
                     double upstream, float* dyi, float* dya) {
    const std::size_t cells = yi.R * yi.S;
    std::vector<float> u, v;
    u.reserve(sel.size() * yi.D);
    v.reserve(sel.size() * yi.D);
    for (int c : sel) {
        const std::size_t t = static_cast<std::size_t>(nn[static_cast<std::size_t>(c)]);
        for (std::size_t ch = 0; ch < yi.D; ++ch) {
            u.push_back(yi.y[ch * cells + static_cast<std::size_t>(c)]);
            v.push_back(ya.y[ch * cells + t]);
        }
    }
    std::vector<float> du(u.size(), 0.0f), dv(v.size(), 0.0f);
    cosine_sim_backward(u, v, upstream, du, dv);
    std::size_t idx = 0;
    for (int c : sel) {
        const std::size_t t = static_cast<std::size_t>(nn[static_cast<std::size_t>(c)]);
        for (std::size_t ch = 0; ch < yi.D; ++ch, ++idx) {
            dyi[ch * cells + static_cast<std::size_t>(c)] += du[idx];
            dya[ch * cells + t] += dv[idx];
        }
    }
}

}  // namespace

double local_cost(const ItemView& yi, const ItemView& ya, std::size_t gamma,
                  LocalCostCache& cache) {
    if (gamma < 1) throw DomainError("local_cost requires gamma >= 1");
    if (yi.D != ya.D || yi.R != ya.R || yi.S != ya.S) {
        throw DomainError("local_cost: view shapes disagree");
    }
    std::vector<double> dist;
    nearest_cells(yi, ya, /*by_position=*/true, cache.loc_nn, dist);
    cache.loc_sel = select_top(dist, gamma);
    const double loc = branch_cost(yi, ya, cache.loc_sel, cache.loc_nn);

    nearest_cells(yi, ya, /*by_position=*/false, cache.feat_nn, dist);
    cache.feat_sel = select_top(dist, gamma);
    const double feat = branch_cost(yi, ya, cache.feat_sel, cache.feat_nn);
    return 0.5 * (loc + feat);
}

void local_cost_backward(const ItemView& yi, const ItemView& ya,
                         const LocalCostCache& cache, double upstream, float* dyi,
                         float* dya) {
    if (cache.loc_nn.size() != yi.R * yi.S) {
        throw DomainError("local_cost_backward: stale cache");
    }
    branch_backward(yi, ya, cache.loc_sel, cache.loc_nn, 0.5 * upstream, dyi, dya);
    branch_backward(yi, ya, cache.feat_sel, cache.feat_nn, 0.5 * upstream, dyi, dya);
}

AffinitySet build_affinities(const Tensor& zhat_s, const Tensor& zhat_t,
                             const ViewBatch& xs, const ViewBatch& xt,
                             const Graph& gs, const Graph& gt, double alpha,
                             std::size_t gamma, AffinityCaches& caches) {
    if (alpha < 0.0 || alpha > 1.0) throw DomainError("alpha must lie in [0, 1]");
    const std::size_t n = zhat_s.extent(0);
    const std::size_t f = zhat_s.extent(1);
    AffinitySet affs;
    affs.cv = Tensor({n, n});
    caches.n = n;
    caches.local.clear();
    if (alpha < 1.0) caches.local.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < n; ++a) {
            double v = alpha * cosine_sim({zhat_s.data() + i * f, f},
                                          {zhat_t.data() + a * f, f})
                                   .value;
            if (alpha < 1.0) {
                v += (1.0 - alpha) * local_cost(item_view(xs, i), item_view(xt, a),
                                                gamma, caches.local[i * n + a]);
            }
            affs.cv.at2(i, a) = static_cast<float>(v);
        }
    }
    affs.ce = Tensor({gs.edges.size(), gt.edges.size()});
    std::vector<float> u(f), v(f);
    for (std::size_t e = 0; e < gs.edges.size(); ++e) {
        const auto [i, j] = gs.edges[e];
        for (std::size_t c = 0; c < f; ++c) {
            u[c] = zhat_s.at2(static_cast<std::size_t>(i), c) -
                   zhat_s.at2(static_cast<std::size_t>(j), c);
        }
        for (std::size_t t = 0; t < gt.edges.size(); ++t) {
            const auto [a, b] = gt.edges[t];
            for (std::size_t c = 0; c < f; ++c) {
                v[c] = zhat_t.at2(static_cast<std::size_t>(a), c) -
                       zhat_t.at2(static_cast<std::size_t>(b), c);
            }
            affs.ce.at2(e, t) = static_cast<float>(cosine_sim(u, v).value);
        }
    }
    return affs;
}

AffinitySet perturb(const AffinitySet& affs, RngStream& rng) {
    AffinitySet out = affs;
    for (float& x : out.cv.span()) {
        x = static_cast<float>(x + sample_gumbel_scalar(rng));
    }
    for (float& x : out.ce.span()) {
        x = static_cast<float>(x + sample_gumbel_scalar(rng));
    }
    return out;
}

AffinityGrads affinity_backward(const Tensor& dcv, const Tensor& dce,
                                const AffinityCaches& caches, const Tensor& zhat_s,
                                const Tensor& zhat_t, const ViewBatch& xs,
                                const ViewBatch& xt, const Graph& gs,
                                const Graph& gt, double alpha) {
    const std::size_t n = zhat_s.extent(0);
    const std::size_t f = zhat_s.extent(1);
    if (alpha < 1.0 && caches.local.size() != n * n) {
        throw DomainError("affinity_backward: cache size does not match batch");
    }
    AffinityGrads g;
    g.dzs = Tensor({n, f});
    g.dzt = Tensor({n, f});
    g.dys = Tensor(xs.y.shape());
    g.dyt = Tensor(xt.y.shape());
    const std::size_t item_stride = xs.y.extent(1) * xs.y.extent(2) * xs.y.extent(3);
    // Many pair contributions with mixed signs cancel; accumulating them in
    // float loses several digits, so sums are kept in double and rounded once.
    std::vector<double> acc_dzs(n * f, 0.0), acc_dzt(n * f, 0.0);
    std::vector<double> acc_dys(g.dys.numel(), 0.0), acc_dyt(g.dyt.numel(), 0.0);
    std::vector<float> du(f), dv(f);
    std::vector<float> dyi(item_stride), dya(item_stride);
    // vertex term
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < n; ++a) {
            const double up = dcv.at2(i, a);
            if (up == 0.0) continue;
            std::fill(du.begin(), du.end(), 0.0f);
            std::fill(dv.begin(), dv.end(), 0.0f);
            cosine_sim_backward({zhat_s.data() + i * f, f},
                                {zhat_t.data() + a * f, f}, alpha * up, du, dv);
            for (std::size_t c = 0; c < f; ++c) {
                acc_dzs[i * f + c] += du[c];
                acc_dzt[a * f + c] += dv[c];
            }
            if (alpha < 1.0) {
                std::fill(dyi.begin(), dyi.end(), 0.0f);
                std::fill(dya.begin(), dya.end(), 0.0f);
                local_cost_backward(item_view(xs, i), item_view(xt, a),
                                    caches.local[i * n + a], (1.0 - alpha) * up,
                                    dyi.data(), dya.data());
                for (std::size_t c = 0; c < item_stride; ++c) {
                    acc_dys[i * item_stride + c] += dyi[c];
                    acc_dyt[a * item_stride + c] += dya[c];
                }
            }
        }
    }
    // edge term
    std::vector<float> u(f), v(f);
    for (std::size_t e = 0; e < gs.edges.size(); ++e) {
        const auto [i, j] = gs.edges[e];
        bool have_u = false;
        for (std::size_t t = 0; t < gt.edges.size(); ++t) {
            const double up = dce.at2(e, t);
            if (up == 0.0) continue;
            if (!have_u) {
                for (std::size_t c = 0; c < f; ++c) {
                    u[c] = zhat_s.at2(static_cast<std::size_t>(i), c) -
                           zhat_s.at2(static_cast<std::size_t>(j), c);
                }
                have_u = true;
            }
            const auto [a, b] = gt.edges[t];
            for (std::size_t c = 0; c < f; ++c) {
                v[c] = zhat_t.at2(static_cast<std::size_t>(a), c) -
                       zhat_t.at2(static_cast<std::size_t>(b), c);
            }
            std::fill(du.begin(), du.end(), 0.0f);
            std::fill(dv.begin(), dv.end(), 0.0f);
            cosine_sim_backward(u, v, up, du, dv);
            for (std::size_t c = 0; c < f; ++c) {
                acc_dzs[static_cast<std::size_t>(i) * f + c] += du[c];
                acc_dzs[static_cast<std::size_t>(j) * f + c] -= du[c];
                acc_dzt[static_cast<std::size_t>(a) * f + c] += dv[c];
                acc_dzt[static_cast<std::size_t>(b) * f + c] -= dv[c];
            }
        }
    }
    for (std::size_t c = 0; c < n * f; ++c) {
        g.dzs[c] = static_cast<float>(acc_dzs[c]);
        g.dzt[c] = static_cast<float>(acc_dzt[c]);
    }
    for (std::size_t c = 0; c < g.dys.numel(); ++c) {
        g.dys[c] = static_cast<float>(acc_dys[c]);
        g.dyt[c] = static_cast<float>(acc_dyt[c]);
    }
    return g;
}

}  // namespace gm
