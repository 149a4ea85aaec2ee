#include "gm/blackbox.hpp"

#include "gm/mathkit.hpp"

namespace gm {

HammingResult hamming_loss_and_grad(const Tensor& v_hat, const Tensor& v_star) {
    if (!v_hat.same_shape(v_star)) {
        throw DomainError("hamming_loss_and_grad: shape mismatch");
    }
    double loss = 0.0;
    Tensor dLdv(v_star.shape());
    for (std::size_t i = 0; i < v_hat.numel(); ++i) {
        loss += v_hat[i] * (1.0 - v_star[i]) + v_star[i] * (1.0 - v_hat[i]);
        dLdv[i] = 1.0f - 2.0f * v_star[i];
    }
    return {loss, std::move(dLdv)};
}

namespace {

// induced edge indicator u[(i,j),(a,b)] = v[i,a] v[j,b] restricted to E^s x E^t
Tensor edge_indicator(const Matching& m, const Graph& gs, const Graph& gt) {
    Tensor u({gs.edges.size(), gt.edges.size()});
    for (std::size_t e = 0; e < gs.edges.size(); ++e) {
        const auto [i, j] = gs.edges[e];
        const int a = m.perm[static_cast<std::size_t>(i)];
        const int b = m.perm[static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < gt.edges.size(); ++t) {
            if (gt.edges[t].first == a && gt.edges[t].second == b) {
                u.at2(e, t) = 1.0f;
            }
        }
    }
    return u;
}

}  // namespace

SolverGrads solver_grad(const AffinitySet& affs, const Graph& gs, const Graph& gt,
                        const Matching& v_hat, const Tensor& dLdv,
                        const SolverGradCfg& cfg, const SolverCfg& solver,
                        RngStream& rng) {
    if (!(cfg.lambda > 0.0)) throw DomainError("solver_grad requires lambda > 0");
    const std::size_t n = affs.cv.extent(0);
    AffinitySet shifted = affs;
    for (std::size_t i = 0; i < n * n; ++i) {
        shifted.cv[i] = static_cast<float>(shifted.cv[i] - cfg.lambda * dLdv[i]);
    }
    const Matching v_lambda = gm_solve(shifted, gs, gt, solver, rng);

    SolverGrads out;
    out.dcv = Tensor({n, n});
    const Tensor vh = v_hat.indicator();
    const Tensor vl = v_lambda.indicator();
    for (std::size_t i = 0; i < n * n; ++i) {
        out.dcv[i] = static_cast<float>((vh[i] - vl[i]) / cfg.lambda);
    }
    const Tensor uh = edge_indicator(v_hat, gs, gt);
    const Tensor ul = edge_indicator(v_lambda, gs, gt);
    out.dce = Tensor(uh.shape());
    for (std::size_t i = 0; i < uh.numel(); ++i) {
        out.dce[i] = static_cast<float>((uh[i] - ul[i]) / cfg.lambda);
    }
    return out;
}

}  // namespace gm
