#pragma once

#include "gm/matcher.hpp"

namespace gm {

struct SolverGradCfg {
    double lambda = 80.0;
};

struct HammingResult {
    double loss;
    Tensor dLdv;  // 1 - 2 v*, the linear-loss coefficient
};

/// L = sum v_hat (1 - v*) + v* (1 - v_hat) over indicator entries.
HammingResult hamming_loss_and_grad(const Tensor& v_hat, const Tensor& v_star);

struct SolverGrads {
    Tensor dcv;  // N x N, entries in {-1/lambda, 0, 1/lambda}
    Tensor dce;  // |E^s| x |E^t|
};

/// Blackbox gradient: re-solve at cv' = cv - lambda * dLdv (maximization
/// convention), dcv = (v_hat - v_lambda)/lambda; edge gradients through the
/// induced edge indicators u[(i,j),(a,b)] = v[i,a] v[j,b].
SolverGrads solver_grad(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                        const Matching& v_hat, const Tensor& dLdv,
                        const SolverGradCfg& cfg, const SolverCfg& solver,
                        RngStream& rng);

}  // namespace gm
