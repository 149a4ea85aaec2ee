#include "gm/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gm/mathkit.hpp"

namespace gm {

Tensor Matching::indicator() const {
    const std::size_t n = perm.size();
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        v.at2(i, static_cast<std::size_t>(perm[i])) = 1.0f;
    }
    return v;
}

bool Matching::valid() const {
    const std::size_t n = perm.size();
    std::vector<bool> seen(n, false);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(n) || seen[static_cast<std::size_t>(p)]) {
            return false;
        }
        seen[static_cast<std::size_t>(p)] = true;
    }
    return true;
}

double match_score(const Matching& m, const AffinitySet& affs, const Graph& gs,
                   const Graph& gt) {
    const std::size_t n = m.perm.size();
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        score += affs.cv.at2(i, static_cast<std::size_t>(m.perm[i]));
    }
    const auto tgt_idx = gt.edge_index();
    for (std::size_t e = 0; e < gs.edges.size(); ++e) {
        const auto [i, j] = gs.edges[e];
        const int a = m.perm[static_cast<std::size_t>(i)];
        const int b = m.perm[static_cast<std::size_t>(j)];
        const int te = tgt_idx[static_cast<std::size_t>(a) * n + b];
        if (te >= 0) score += affs.ce.at2(e, static_cast<std::size_t>(te));
    }
    return score;
}

Matching solve_lap(const Tensor& cv) {
    // Min-cost augmenting-path Hungarian with potentials on -cv, O(N^3).
    const int n = static_cast<int>(cv.extent(0));
    if (cv.rank() != 2 || cv.extent(1) != static_cast<std::size_t>(n)) {
        throw DomainError("solve_lap expects a square matrix");
    }
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    auto cost = [&](int i, int j) {
        return -static_cast<double>(
            cv.at2(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)));
    };
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, INF);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = INF;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Matching m;
    m.perm.assign(static_cast<std::size_t>(n), 0);
    for (int j = 1; j <= n; ++j) {
        m.perm[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    }
    return m;
}

namespace {

Matching solve_exact(const AffinitySet& affs, const Graph& gs, const Graph& gt) {
    const std::size_t n = affs.cv.extent(0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Matching best{perm};
    double best_score = match_score(best, affs, gs, gt);
    // lexicographic enumeration; strict improvement keeps the smallest pi on ties
    while (std::next_permutation(perm.begin(), perm.end())) {
        Matching cand{perm};
        const double s = match_score(cand, affs, gs, gt);
        if (s > best_score) {
            best_score = s;
            best = cand;
        }
    }
    return best;
}

void hill_climb(Matching& m, double& score, const AffinitySet& affs, const Graph& gs,
                const Graph& gt, std::size_t max_sweeps) {
    const std::size_t n = m.perm.size();
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool improved = false;
        // pairwise swaps
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                std::swap(m.perm[i], m.perm[j]);
                const double s = match_score(m, affs, gs, gt);
                if (s > score + 1e-12) {
                    score = s;
                    improved = true;
                } else {
                    std::swap(m.perm[i], m.perm[j]);
                }
            }
        }
        // 3-cycles (both orientations) escape swap-local optima
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                for (std::size_t l = j + 1; l < n; ++l) {
                    for (int dir = 0; dir < 2; ++dir) {
                        const int a = m.perm[i], b = m.perm[j], c = m.perm[l];
                        if (dir == 0) {
                            m.perm[i] = b; m.perm[j] = c; m.perm[l] = a;
                        } else {
                            m.perm[i] = c; m.perm[j] = a; m.perm[l] = b;
                        }
                        const double s = match_score(m, affs, gs, gt);
                        if (s > score + 1e-12) {
                            score = s;
                            improved = true;
                        } else {
                            m.perm[i] = a; m.perm[j] = b; m.perm[l] = c;
                        }
                    }
                }
            }
        }
        if (!improved) break;
    }
}

}  // namespace

Matching gm_solve_heuristic(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                            const SolverCfg& cfg, RngStream& rng) {
    const std::size_t n = affs.cv.extent(0);
    Matching best = solve_lap(affs.cv);
    double best_score = match_score(best, affs, gs, gt);
    hill_climb(best, best_score, affs, gs, gt, cfg.max_sweeps);
    for (std::size_t r = 1; r < cfg.restarts; ++r) {
        Matching m;
        m.perm.resize(n);
        std::iota(m.perm.begin(), m.perm.end(), 0);
        // Fisher-Yates from the restart stream
        RngStream rs = rng.split(r);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rs.next_below(i));
            std::swap(m.perm[i - 1], m.perm[j]);
        }
        double score = match_score(m, affs, gs, gt);
        hill_climb(m, score, affs, gs, gt, cfg.max_sweeps);
        if (score > best_score) {
            best_score = score;
            best = m;
        }
    }
    return best;
}

Matching gm_solve(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                  const SolverCfg& cfg, RngStream& rng) {
    const std::size_t n = affs.cv.extent(0);
    if (affs.cv.rank() != 2 || affs.cv.extent(1) != n) {
        throw DomainError("gm_solve expects a square cv");
    }
    if (n <= cfg.exact_threshold) return solve_exact(affs, gs, gt);
    return gm_solve_heuristic(affs, gs, gt, cfg, rng);
}

}  // namespace gm
