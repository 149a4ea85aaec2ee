#pragma once

#include <vector>

#include "gm/rng.hpp"
#include "gm/tensor.hpp"

namespace gm {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CosineResult {
    double value = 0.0;
    bool degenerate = false;  // a zero-norm input; value and gradient are 0
};

/// <u,v>/(|u||v|), double accumulation. Zero-norm inputs give 0, flagged.
CosineResult cosine_sim(std::span<const float> u, std::span<const float> v);

/// Gradient of upstream * cosine_sim(u, v) accumulated into du, dv.
/// Zero-norm inputs contribute nothing.
void cosine_sim_backward(std::span<const float> u, std::span<const float> v,
                         double upstream, std::span<float> du, std::span<float> dv);

/// i.i.d. Gumbel(0,1) via -log(-log(U)), U clamped to (1e-12, 1-1e-12).
double sample_gumbel_scalar(RngStream& rng);
Tensor sample_gumbel(RngStream& rng, std::vector<std::size_t> shape);

/// Gamma function on z > 0, Lanczos approximation (g=7, 9 terms).
double gamma_fn(double z);

/// Digamma on z > 0 (recurrence into the asymptotic regime).
double digamma(double z);

/// If the global L2 norm exceeds max_norm, scale every tensor by max_norm/norm.
/// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor*>& grads, double max_norm);

}  // namespace gm
