#pragma once

#include <vector>

#include "gm/graph.hpp"
#include "gm/rng.hpp"
#include "gm/tensor.hpp"

namespace gm {

/// Vertex costs cv (N x N) and edge costs ce (|E^s| x |E^t|), both
/// similarities (maximization convention throughout).
struct AffinitySet {
    Tensor cv;
    Tensor ce;
};

struct Matching {
    std::vector<int> perm;  // perm[i] = matched target node

    Tensor indicator() const;  // N x N binary v with v[i, perm[i]] = 1
    bool valid() const;
};

struct SolverCfg {
    std::size_t exact_threshold = 8;  // exhaustive solve up to this N
    std::size_t restarts = 8;
    std::size_t max_sweeps = 50;
};

/// Sum_i cv[i, pi(i)] + sum over source edges whose image is a target edge of
/// the corresponding ce entry.
double match_score(const Matching& m, const AffinitySet& affs, const Graph& gs,
                   const Graph& gt);

/// Max-weight linear assignment on cv, O(N^3) augmenting-path Hungarian.
Matching solve_lap(const Tensor& cv);

/// Exact enumeration for N <= cfg.exact_threshold (lexicographically smallest
/// optimum), otherwise Hungarian-seeded 2-swap hill climbing over restarts.
Matching gm_solve(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                  const SolverCfg& cfg, RngStream& rng);

/// Heuristic path regardless of N (benchmarks, tests).
Matching gm_solve_heuristic(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                            const SolverCfg& cfg, RngStream& rng);

}  // namespace gm
