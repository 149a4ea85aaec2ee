#include "gm/mathkit.hpp"

#include <cmath>

namespace gm {

double RngStream::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

CosineResult cosine_sim(std::span<const float> u, std::span<const float> v) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return {0.0, true};
    return {dot / (std::sqrt(nu) * std::sqrt(nv)), false};
}

void cosine_sim_backward(std::span<const float> u, std::span<const float> v,
                         double upstream, std::span<float> du, std::span<float> dv) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return;
    const double inu = 1.0 / std::sqrt(nu);
    const double inv = 1.0 / std::sqrt(nv);
    const double c = dot * inu * inv;
    // d cos / du_i = v_i/(|u||v|) - cos * u_i/|u|^2
    for (std::size_t i = 0; i < u.size(); ++i) {
        du[i] += static_cast<float>(upstream * (v[i] * inu * inv - c * u[i] / nu));
        dv[i] += static_cast<float>(upstream * (u[i] * inu * inv - c * v[i] / nv));
    }
}

double sample_gumbel_scalar(RngStream& rng) {
    double u = rng.next_uniform();
    if (u < 1e-12) u = 1e-12;
    if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
    return -std::log(-std::log(u));
}

Tensor sample_gumbel(RngStream& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<float>(sample_gumbel_scalar(rng));
    }
    return t;
}

double gamma_fn(double z) {
    if (!(z > 0.0)) {
        throw DomainError("gamma_fn requires z > 0, got " + std::to_string(z));
    }
    // Lanczos, g = 7, 9 coefficients (Godfrey).
    static const double coeff[9] = {
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    };
    if (z < 0.5) {
        // reflection keeps the approximation in its accurate range
        const double pi = 3.14159265358979323846;
        return pi / (std::sin(pi * z) * gamma_fn(1.0 - z));
    }
    const double x = z - 1.0;
    double a = coeff[0];
    const double t = x + 7.5;
    for (int i = 1; i < 9; ++i) a += coeff[i] / (x + i);
    return std::sqrt(2.0 * 3.14159265358979323846) * std::pow(t, x + 0.5) *
           std::exp(-t) * a;
}

double digamma(double z) {
    if (!(z > 0.0)) throw DomainError("digamma requires z > 0");
    double result = 0.0;
    while (z < 6.0) {
        result -= 1.0 / z;
        z += 1.0;
    }
    const double inv = 1.0 / z;
    const double inv2 = inv * inv;
    result += std::log(z) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

double clip_global_norm(std::vector<Tensor*>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor* g : grads) {
        for (float v : g->span()) sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor* g : grads) {
            for (float& v : g->span()) v = static_cast<float>(v * s);
        }
    }
    return norm;
}

}  // namespace gm
