#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gm/affinity.hpp"
#include "gm/mathkit.hpp"
#include "oracles.hpp"

using namespace gm;

namespace {

ViewBatch random_view_batch(RngStream& rng, std::size_t n, std::size_t d,
                            std::size_t r, std::size_t s) {
    ViewBatch vb;
    vb.y = Tensor({n, d, r, s});
    vb.pos = Tensor({n, r, s, 2});
    for (float& v : vb.y.span()) v = static_cast<float>(rng.next_gaussian());
    for (float& v : vb.pos.span()) v = static_cast<float>(rng.next_uniform());
    return vb;
}

// Brute-force local_cost written straight from the definition: both branches
// enumerate every candidate cell, sort the per-cell NN distances, keep the
// gamma smallest, and take the cosine of the stacked feature vectors.
double local_cost_oracle(const ItemView& yi, const ItemView& ya, std::size_t gamma) {
    const std::size_t cells = yi.R * yi.S;
    double total = 0.0;
    for (int branch = 0; branch < 2; ++branch) {
        const bool by_pos = branch == 0;
        std::vector<int> nn(cells);
        std::vector<double> dist(cells);
        for (std::size_t c = 0; c < cells; ++c) {
            double best = 1e300;
            int best_t = 0;
            for (std::size_t t = 0; t < cells; ++t) {
                double d = 0.0;
                if (by_pos) {
                    for (int ax = 0; ax < 2; ++ax) {
                        const double diff =
                            static_cast<double>(yi.pos[c * 2 + ax]) -
                            ya.pos[t * 2 + ax];
                        d += diff * diff;
                    }
                } else {
                    for (std::size_t ch = 0; ch < yi.D; ++ch) {
                        const double diff =
                            static_cast<double>(yi.y[ch * cells + c]) -
                            ya.y[ch * cells + t];
                        d += diff * diff;
                    }
                }
                if (d < best) {
                    best = d;
                    best_t = static_cast<int>(t);
                }
            }
            nn[c] = best_t;
            dist[c] = best;
        }
        std::vector<int> order(cells);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
        });
        order.resize(std::min(gamma, cells));
        std::vector<float> u, v;
        for (int c : order) {
            for (std::size_t ch = 0; ch < yi.D; ++ch) {
                u.push_back(yi.y[ch * cells + static_cast<std::size_t>(c)]);
                v.push_back(
                    ya.y[ch * cells + static_cast<std::size_t>(nn[(std::size_t)c])]);
            }
        }
        total += cosine_sim(u, v).value;
    }
    return 0.5 * total;
}

// cost with the discrete choices frozen from a cache (straight-through view)
double frozen_local_cost(const ItemView& yi, const ItemView& ya,
                         const LocalCostCache& cache) {
    const std::size_t cells = yi.R * yi.S;
    auto branch = [&](const std::vector<int>& sel, const std::vector<int>& nn) {
        std::vector<float> u, v;
        for (int c : sel) {
            for (std::size_t ch = 0; ch < yi.D; ++ch) {
                u.push_back(yi.y[ch * cells + static_cast<std::size_t>(c)]);
                v.push_back(
                    ya.y[ch * cells + static_cast<std::size_t>(nn[(std::size_t)c])]);
            }
        }
        return cosine_sim(u, v).value;
    };
    return 0.5 * (branch(cache.loc_sel, cache.loc_nn) +
                  branch(cache.feat_sel, cache.feat_nn));
}

}  // namespace

TEST_CASE("local_cost of identical views is 1") {
    RngStream rng(3);
    const ViewBatch vb = random_view_batch(rng, 1, 2, 3, 3);
    LocalCostCache cache;
    CHECK(local_cost(item_view(vb, 0), item_view(vb, 0), 4, cache) ==
          doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gamma at or above the cell count keeps every cell") {
    RngStream rng(5);
    const ViewBatch a = random_view_batch(rng, 1, 2, 3, 3);
    const ViewBatch b = random_view_batch(rng, 1, 2, 3, 3);
    LocalCostCache c9, c50;
    const double v9 = local_cost(item_view(a, 0), item_view(b, 0), 9, c9);
    const double v50 = local_cost(item_view(a, 0), item_view(b, 0), 50, c50);
    CHECK(v9 == doctest::Approx(v50).epsilon(1e-12));
    CHECK(c9.loc_sel.size() == 9);
    CHECK(c50.loc_sel.size() == 9);
}

TEST_CASE("local_cost equals the brute-force oracle") {
    RngStream rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const ViewBatch a = random_view_batch(rng, 1, 2, 3, 3);
        const ViewBatch b = random_view_batch(rng, 1, 2, 3, 3);
        LocalCostCache cache;
        const double got = local_cost(item_view(a, 0), item_view(b, 0), 4, cache);
        const double want = local_cost_oracle(item_view(a, 0), item_view(b, 0), 4);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("local_cost_backward vs finite differences with frozen indices") {
    RngStream rng(11);
    ViewBatch a = random_view_batch(rng, 1, 2, 3, 3);
    ViewBatch b = random_view_batch(rng, 1, 2, 3, 3);
    LocalCostCache cache;
    local_cost(item_view(a, 0), item_view(b, 0), 4, cache);

    std::vector<float> dyi(a.y.numel(), 0.0f), dya(b.y.numel(), 0.0f);
    const double upstream = 1.7;
    local_cost_backward(item_view(a, 0), item_view(b, 0), cache, upstream,
                        dyi.data(), dya.data());

    auto frozen = [&] {
        return upstream * frozen_local_cost(item_view(a, 0), item_view(b, 0), cache);
    };
    for (std::size_t i = 0; i < a.y.numel(); ++i) {
        const double fd = oracle::central_diff(a.y.span()[i], frozen, 1e-3);
        const double scale = std::max({std::abs(fd), std::abs((double)dyi[i]), 1e-2});
        CHECK(std::abs(dyi[i] - fd) / scale < 1e-3);
    }
    for (std::size_t i = 0; i < b.y.numel(); ++i) {
        const double fd = oracle::central_diff(b.y.span()[i], frozen, 1e-3);
        const double scale = std::max({std::abs(fd), std::abs((double)dya[i]), 1e-2});
        CHECK(std::abs(dya[i] - fd) / scale < 1e-3);
    }
}

TEST_CASE("identical views give a unit cv diagonal") {
    RngStream rng(13);
    const std::size_t n = 4, f = 3;
    const ViewBatch xs = random_view_batch(rng, n, 2, 3, 3);
    Tensor z({n, f});
    for (float& v : z.span()) v = static_cast<float>(rng.next_gaussian());
    const Graph g = knn_graph(z, 2);
    AffinityCaches caches;
    const AffinitySet affs = build_affinities(z, z, xs, xs, g, g, 0.8, 4, caches);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(affs.cv.at2(i, i) == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (float v : affs.cv.span()) {
        CHECK(v >= -1.0f - 1e-6f);
        CHECK(v <= 1.0f + 1e-6f);
    }
    for (float v : affs.ce.span()) {
        CHECK(v >= -1.0f - 1e-6f);
        CHECK(v <= 1.0f + 1e-6f);
    }
}

TEST_CASE("alpha=1 is the pure cosine endpoint and skips local costs") {
    RngStream rng(17);
    const std::size_t n = 4, f = 3;
    const ViewBatch xs = random_view_batch(rng, n, 2, 3, 3);
    const ViewBatch xt = random_view_batch(rng, n, 2, 3, 3);
    Tensor zs({n, f}), zt({n, f});
    for (float& v : zs.span()) v = static_cast<float>(rng.next_gaussian());
    for (float& v : zt.span()) v = static_cast<float>(rng.next_gaussian());
    const Graph gs = knn_graph(zs, 2), gt = knn_graph(zt, 2);
    AffinityCaches caches;
    const AffinitySet affs =
        build_affinities(zs, zt, xs, xt, gs, gt, 1.0, 4, caches);
    CHECK(caches.local.empty());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < n; ++a) {
            const double c = cosine_sim({zs.data() + i * f, f},
                                        {zt.data() + a * f, f})
                                 .value;
            CHECK(affs.cv.at2(i, a) == doctest::Approx(c).epsilon(1e-6));
        }
    }
}

TEST_CASE("perturb adds deterministic Gumbel noise") {
    RngStream rng(19);
    AffinitySet affs;
    affs.cv = Tensor({100, 100});
    affs.ce = Tensor({100, 100});
    RngStream p1(23), p2(23);
    const AffinitySet a = perturb(affs, p1);
    const AffinitySet b = perturb(affs, p2);
    CHECK(a.cv == b.cv);
    CHECK(a.ce == b.ce);

    double mean = 0.0;
    for (float v : a.cv.span()) mean += v;
    for (float v : a.ce.span()) mean += v;
    mean /= static_cast<double>(a.cv.numel() + a.ce.numel());
    CHECK(mean == doctest::Approx(0.5772).epsilon(0.02));
}

TEST_CASE("affinity_backward zero upstream gives zero gradients") {
    RngStream rng(29);
    const std::size_t n = 3, f = 3;
    const ViewBatch xs = random_view_batch(rng, n, 2, 3, 3);
    const ViewBatch xt = random_view_batch(rng, n, 2, 3, 3);
    Tensor zs({n, f}), zt({n, f});
    for (float& v : zs.span()) v = static_cast<float>(rng.next_gaussian());
    for (float& v : zt.span()) v = static_cast<float>(rng.next_gaussian());
    const Graph gs = knn_graph(zs, 1), gt = knn_graph(zt, 1);
    AffinityCaches caches;
    build_affinities(zs, zt, xs, xt, gs, gt, 0.8, 4, caches);
    Tensor dcv({n, n}), dce({gs.edges.size(), gt.edges.size()});
    const AffinityGrads g =
        affinity_backward(dcv, dce, caches, zs, zt, xs, xt, gs, gt, 0.8);
    for (float v : g.dzs.span()) CHECK(v == 0.0f);
    for (float v : g.dzt.span()) CHECK(v == 0.0f);
    for (float v : g.dys.span()) CHECK(v == 0.0f);
    for (float v : g.dyt.span()) CHECK(v == 0.0f);
}

TEST_CASE("alpha=1 leaves the feature-map gradients empty") {
    RngStream rng(31);
    const std::size_t n = 3, f = 3;
    const ViewBatch xs = random_view_batch(rng, n, 2, 3, 3);
    const ViewBatch xt = random_view_batch(rng, n, 2, 3, 3);
    Tensor zs({n, f}), zt({n, f});
    for (float& v : zs.span()) v = static_cast<float>(rng.next_gaussian());
    for (float& v : zt.span()) v = static_cast<float>(rng.next_gaussian());
    const Graph gs = knn_graph(zs, 1), gt = knn_graph(zt, 1);
    AffinityCaches caches;
    build_affinities(zs, zt, xs, xt, gs, gt, 1.0, 4, caches);
    Tensor dcv({n, n}), dce({gs.edges.size(), gt.edges.size()});
    dcv.fill(0.3f);
    dce.fill(-0.2f);
    const AffinityGrads g =
        affinity_backward(dcv, dce, caches, zs, zt, xs, xt, gs, gt, 1.0);
    for (float v : g.dys.span()) CHECK(v == 0.0f);
    for (float v : g.dyt.span()) CHECK(v == 0.0f);
    bool any = false;
    for (float v : g.dzs.span()) any = any || v != 0.0f;
    CHECK(any);
}

TEST_CASE("full affinity gradients vs finite differences") {
    RngStream rng(37);
    const std::size_t n = 3, f = 3;
    ViewBatch xs = random_view_batch(rng, n, 2, 3, 3);
    ViewBatch xt = random_view_batch(rng, n, 2, 3, 3);
    Tensor zs({n, f}), zt({n, f});
    for (float& v : zs.span()) v = static_cast<float>(rng.next_gaussian());
    for (float& v : zt.span()) v = static_cast<float>(rng.next_gaussian());
    const Graph gs = knn_graph(zs, 1), gt = knn_graph(zt, 1);
    const double alpha = 0.8;
    AffinityCaches caches;
    build_affinities(zs, zt, xs, xt, gs, gt, alpha, 4, caches);

    Tensor dcv({n, n}), dce({gs.edges.size(), gt.edges.size()});
    RngStream coeff_rng(41);
    for (float& v : dcv.span()) v = static_cast<float>(coeff_rng.next_gaussian());
    for (float& v : dce.span()) v = static_cast<float>(coeff_rng.next_gaussian());
    const AffinityGrads g =
        affinity_backward(dcv, dce, caches, zs, zt, xs, xt, gs, gt, alpha);

    // frozen-index scalar objective: sum(dcv * cv) + sum(dce * ce) where the
    // local-cost index choices come from the cached evaluation
    auto objective = [&] {
        double total = 0.0;
        const std::size_t fdim = f;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < n; ++a) {
                double v = alpha * cosine_sim({zs.data() + i * fdim, fdim},
                                              {zt.data() + a * fdim, fdim})
                                       .value;
                v += (1.0 - alpha) * frozen_local_cost(item_view(xs, i),
                                                       item_view(xt, a),
                                                       caches.local[i * n + a]);
                total += dcv.at2(i, a) * v;
            }
        }
        std::vector<float> u(f), w(f);
        for (std::size_t e = 0; e < gs.edges.size(); ++e) {
            const auto [i, j] = gs.edges[e];
            for (std::size_t c = 0; c < f; ++c) {
                u[c] = zs.at2((std::size_t)i, c) - zs.at2((std::size_t)j, c);
            }
            for (std::size_t t = 0; t < gt.edges.size(); ++t) {
                const auto [a, b] = gt.edges[t];
                for (std::size_t c = 0; c < f; ++c) {
                    w[c] = zt.at2((std::size_t)a, c) - zt.at2((std::size_t)b, c);
                }
                total += dce.at2(e, t) * cosine_sim(u, w).value;
            }
        }
        return total;
    };

    auto check = [&](Tensor& slot_tensor, const Tensor& grad) {
        for (std::size_t i = 0; i < slot_tensor.numel(); ++i) {
            const double fd = oracle::central_diff(slot_tensor[i], objective, 1e-3);
            const double scale =
                std::max({std::abs(fd), std::abs((double)grad[i]), 1e-2});
            CHECK(std::abs(grad[i] - fd) / scale < 2e-3);
        }
    };
    check(zs, g.dzs);
    check(zt, g.dzt);
    check(xs.y, g.dys);
    check(xt.y, g.dyt);
}
