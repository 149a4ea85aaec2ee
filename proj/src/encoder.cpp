#include "gm/encoder.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gm/mathkit.hpp"

namespace gm {

namespace {

LinearLayer init_linear(RngStream& rng, std::size_t out, std::size_t in) {
    LinearLayer l;
    l.W = Tensor({out, in});
    l.b = Tensor({out});
    const double scale = std::sqrt(2.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < l.W.numel(); ++i) {
        l.W[i] = static_cast<float>(scale * rng.next_gaussian());
    }
    return l;
}

}  // namespace

ModelParams ModelParams::init(RngStream& rng, std::size_t D, std::size_t F) {
    ModelParams p;
    p.encoder = init_linear(rng, D, D);
    // identity bias keeps the raw features visible through the ReLU at step 0
    for (std::size_t i = 0; i < D; ++i) p.encoder.W.at2(i, i) += 1.0f;
    p.projector = init_linear(rng, F, D);
    for (int l = 0; l < 2; ++l) {
        LinearLayer lin = init_linear(rng, F, F);
        for (std::size_t i = 0; i < F; ++i) lin.W.at2(i, i) += 1.0f;
        p.gnn[l].W = std::move(lin.W);
        p.gnn[l].b = std::move(lin.b);
    }
    return p;
}

ModelParams ModelParams::identity(std::size_t D) {
    ModelParams p;
    auto eye = [D] {
        Tensor t({D, D});
        for (std::size_t i = 0; i < D; ++i) t.at2(i, i) = 1.0f;
        return t;
    };
    p.encoder = {eye(), Tensor({D})};
    p.projector = {eye(), Tensor({D})};
    p.gnn[0] = {eye(), Tensor({D})};
    p.gnn[1] = {eye(), Tensor({D})};
    return p;
}

std::vector<Tensor*> ModelParams::tensors() {
    return {&encoder.W, &encoder.b, &projector.W, &projector.b,
            &gnn[0].W,  &gnn[0].b,  &gnn[1].W,    &gnn[1].b};
}

std::vector<const Tensor*> ModelParams::tensors() const {
    return {&encoder.W, &encoder.b, &projector.W, &projector.b,
            &gnn[0].W,  &gnn[0].b,  &gnn[1].W,    &gnn[1].b};
}

std::vector<std::string> ModelParams::tensor_names() const {
    return {"encoder.W",   "encoder.b",   "projector.W", "projector.b",
            "gnn.0.W",     "gnn.0.b",     "gnn.1.W",     "gnn.1.b"};
}

ModelGrads ModelGrads::zeros_like(const ModelParams& p) {
    ModelGrads g;
    g.encoder = {Tensor(p.encoder.W.shape()), Tensor(p.encoder.b.shape())};
    g.projector = {Tensor(p.projector.W.shape()), Tensor(p.projector.b.shape())};
    for (int l = 0; l < 2; ++l) {
        g.gnn[l] = {Tensor(p.gnn[l].W.shape()), Tensor(p.gnn[l].b.shape())};
    }
    return g;
}

std::vector<Tensor*> ModelGrads::tensors() {
    return {&encoder.W, &encoder.b, &projector.W, &projector.b,
            &gnn[0].W,  &gnn[0].b,  &gnn[1].W,    &gnn[1].b};
}

Tensor encoder_forward(const Tensor& x, const ModelParams& p, EncoderCtx& ctx) {
    if (x.rank() != 4 || x.extent(1) != p.encoder.W.extent(1)) {
        throw DomainError("encoder_forward: input shape does not match W");
    }
    const std::size_t N = x.extent(0), D = x.extent(1), R = x.extent(2),
                      S = x.extent(3);
    Tensor y({N, D, R, S});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t o = 0; o < D; ++o) {
                    double acc = p.encoder.b[o];
                    for (std::size_t i = 0; i < D; ++i) {
                        acc += static_cast<double>(p.encoder.W.at2(o, i)) *
                               x.at4(n, i, r, s);
                    }
                    y.at4(n, o, r, s) = acc > 0.0 ? static_cast<float>(acc) : 0.0f;
                }
            }
        }
    }
    ctx.x = x;
    ctx.y = y;
    return y;
}

Tensor encoder_backward(const Tensor& dy, const ModelParams& p, const EncoderCtx& ctx,
                        ModelGrads& g) {
    if (!dy.same_shape(ctx.y)) throw DomainError("encoder_backward: shape mismatch");
    const std::size_t N = dy.extent(0), D = dy.extent(1), R = dy.extent(2),
                      S = dy.extent(3);
    Tensor dx(ctx.x.shape());
    // double accumulators: the per-cell contributions carry mixed signs and a
    // float running sum loses precision to cancellation
    std::vector<double> gb(D, 0.0), gW(D * D, 0.0), gx(dx.numel(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t o = 0; o < D; ++o) {
                    if (ctx.y.at4(n, o, r, s) <= 0.0f) continue;  // ReLU gate
                    const double up = dy.at4(n, o, r, s);
                    gb[o] += up;
                    for (std::size_t i = 0; i < D; ++i) {
                        gW[o * D + i] += up * ctx.x.at4(n, i, r, s);
                        gx[((n * D + i) * R + r) * S + s] +=
                            up * p.encoder.W.at2(o, i);
                    }
                }
            }
        }
    }
    for (std::size_t o = 0; o < D; ++o) {
        g.encoder.b[o] += static_cast<float>(gb[o]);
        for (std::size_t i = 0; i < D; ++i) {
            g.encoder.W.at2(o, i) += static_cast<float>(gW[o * D + i]);
        }
    }
    for (std::size_t c = 0; c < dx.numel(); ++c) dx[c] = static_cast<float>(gx[c]);
    return dx;
}

Tensor pool_project_forward(const Tensor& y, const ModelParams& p,
                            PoolProjectCtx& ctx) {
    const std::size_t N = y.extent(0), D = y.extent(1), R = y.extent(2),
                      S = y.extent(3);
    if (D != p.projector.W.extent(1)) {
        throw DomainError("pool_project_forward: channel count does not match W");
    }
    const std::size_t F = p.projector.W.extent(0);
    ctx.pooled = Tensor({N, D});
    ctx.R = R;
    ctx.S = S;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < D; ++d) {
            double acc = 0.0;
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t s = 0; s < S; ++s) acc += y.at4(n, d, r, s);
            }
            ctx.pooled.at2(n, d) = static_cast<float>(acc / (R * S));
        }
    }
    Tensor z({N, F});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < F; ++o) {
            double acc = p.projector.b[o];
            for (std::size_t d = 0; d < D; ++d) {
                acc += static_cast<double>(p.projector.W.at2(o, d)) *
                       ctx.pooled.at2(n, d);
            }
            z.at2(n, o) = static_cast<float>(acc);
        }
    }
    return z;
}

Tensor pool_project_backward(const Tensor& dz, const ModelParams& p,
                             const PoolProjectCtx& ctx, ModelGrads& g) {
    const std::size_t N = dz.extent(0), F = dz.extent(1);
    const std::size_t D = ctx.pooled.extent(1);
    if (F != p.projector.W.extent(0)) {
        throw DomainError("pool_project_backward: shape mismatch");
    }
    Tensor dy({N, D, ctx.R, ctx.S});
    const double inv = 1.0 / static_cast<double>(ctx.R * ctx.S);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < D; ++d) {
            double dm = 0.0;
            for (std::size_t o = 0; o < F; ++o) {
                const double up = dz.at2(n, o);
                dm += up * p.projector.W.at2(o, d);
            }
            const float cell = static_cast<float>(dm * inv);
            for (std::size_t r = 0; r < ctx.R; ++r) {
                for (std::size_t s = 0; s < ctx.S; ++s) dy.at4(n, d, r, s) = cell;
            }
        }
    }
    for (std::size_t o = 0; o < F; ++o) {
        double gb = 0.0;
        for (std::size_t n = 0; n < N; ++n) gb += dz.at2(n, o);
        g.projector.b[o] += static_cast<float>(gb);
        for (std::size_t d = 0; d < D; ++d) {
            double gw = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                gw += static_cast<double>(dz.at2(n, o)) * ctx.pooled.at2(n, d);
            }
            g.projector.W.at2(o, d) += static_cast<float>(gw);
        }
    }
    return dy;
}

namespace {

Tensor row_normalized_prop(const Graph& graph) {
    const std::size_t n = graph.n;
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i) a.at2(i, i) = 1.0f;  // self-loops
    for (const auto& [i, j] : graph.edges) {
        a.at2(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0f;
        a.at2(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = 1.0f;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a.at2(i, j);
        for (std::size_t j = 0; j < n; ++j) {
            a.at2(i, j) = static_cast<float>(a.at2(i, j) / deg);
        }
    }
    return a;
}

// out = P * H (n x n times n x f)
Tensor propagate(const Tensor& prop, const Tensor& h) {
    const std::size_t n = h.extent(0), f = h.extent(1);
    Tensor out({n, f});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double p = prop.at2(i, j);
            if (p == 0.0) continue;
            for (std::size_t c = 0; c < f; ++c) {
                out.at2(i, c) += static_cast<float>(p * h.at2(j, c));
            }
        }
    }
    return out;
}

// out = P^T * H, rows of H given as a flat double buffer
std::vector<double> propagate_t(const Tensor& prop, const std::vector<double>& h,
                                std::size_t n, std::size_t f) {
    std::vector<double> out(n * f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double p = prop.at2(j, i);
            if (p == 0.0) continue;
            for (std::size_t c = 0; c < f; ++c) {
                out[i * f + c] += p * h[j * f + c];
            }
        }
    }
    return out;
}

// out = X W^T + b
Tensor linear_rows(const Tensor& x, const GcnLayer& l, bool relu) {
    const std::size_t n = x.extent(0), in = x.extent(1);
    const std::size_t out_dim = l.W.extent(0);
    if (in != l.W.extent(1)) throw DomainError("gnn layer width mismatch");
    Tensor out({n, out_dim});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = l.b[o];
            for (std::size_t c = 0; c < in; ++c) {
                acc += static_cast<double>(l.W.at2(o, c)) * x.at2(i, c);
            }
            out.at2(i, o) = (relu && acc <= 0.0) ? 0.0f : static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace

Tensor gnn_forward(const Graph& graph, const Tensor& z, const ModelParams& p,
                   GnnCtx& ctx) {
    if (graph.n != z.extent(0)) throw DomainError("gnn_forward: node count mismatch");
    ctx.prop = row_normalized_prop(graph);
    ctx.h0 = z;
    ctx.ph0 = propagate(ctx.prop, ctx.h0);
    ctx.h1 = linear_rows(ctx.ph0, p.gnn[0], /*relu=*/true);
    ctx.ph1 = propagate(ctx.prop, ctx.h1);
    return linear_rows(ctx.ph1, p.gnn[1], /*relu=*/false);
}

Tensor gnn_backward(const Tensor& dzhat, const ModelParams& p, const GnnCtx& ctx,
                    ModelGrads& g) {
    const std::size_t n = dzhat.extent(0), f = dzhat.extent(1);
    const std::size_t in1 = p.gnn[1].W.extent(1);
    const std::size_t out0 = p.gnn[0].W.extent(0), in0 = p.gnn[0].W.extent(1);
    // the whole chain below accumulates in double and rounds once on exit:
    // the cancelling sums would otherwise lose several digits in float
    std::vector<double> gb1(f, 0.0), gW1(f * in1, 0.0);
    std::vector<double> dph1(n * in1, 0.0);
    // layer 2 (no ReLU): dzhat -> dph1, gnn[1] grads
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < f; ++o) {
            const double up = dzhat.at2(i, o);
            gb1[o] += up;
            for (std::size_t c = 0; c < in1; ++c) {
                gW1[o * in1 + c] += up * ctx.ph1.at2(i, c);
                dph1[i * in1 + c] += up * p.gnn[1].W.at2(o, c);
            }
        }
    }
    const std::vector<double> dh1 = propagate_t(ctx.prop, dph1, n, in1);
    // layer 1 ReLU gate, then linear backward
    std::vector<double> gb0(out0, 0.0), gW0(out0 * in0, 0.0);
    std::vector<double> dph0(n * in0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < out0; ++o) {
            if (ctx.h1.at2(i, o) <= 0.0f) continue;
            const double up = dh1[i * in1 + o];
            gb0[o] += up;
            for (std::size_t c = 0; c < in0; ++c) {
                gW0[o * in0 + c] += up * ctx.ph0.at2(i, c);
                dph0[i * in0 + c] += up * p.gnn[0].W.at2(o, c);
            }
        }
    }
    const std::vector<double> dz = propagate_t(ctx.prop, dph0, n, in0);
    for (std::size_t o = 0; o < f; ++o) {
        g.gnn[1].b[o] += static_cast<float>(gb1[o]);
        for (std::size_t c = 0; c < in1; ++c) {
            g.gnn[1].W.at2(o, c) += static_cast<float>(gW1[o * in1 + c]);
        }
    }
    for (std::size_t o = 0; o < out0; ++o) {
        g.gnn[0].b[o] += static_cast<float>(gb0[o]);
        for (std::size_t c = 0; c < in0; ++c) {
            g.gnn[0].W.at2(o, c) += static_cast<float>(gW0[o * in0 + c]);
        }
    }
    Tensor out({n, in0});
    for (std::size_t c = 0; c < n * in0; ++c) out[c] = static_cast<float>(dz[c]);
    return out;
}

void save_checkpoint(const std::string& dir, const ModelParams& p) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto names = p.tensor_names();
    const auto tensors = p.tensors();
    nlohmann::json manifest;
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string file = names[i];
        for (char& c : file) {
            if (c == '.') c = '_';
        }
        file += ".gmt";
        save_tensor(dir + "/" + file, *tensors[i]);
        manifest["tensors"][names[i]] = {{"file", file},
                                         {"shape", tensors[i]->shape()}};
    }
    atomic_write_text(dir + "/params.json", manifest.dump(2) + "\n");
}

ModelParams load_checkpoint(const std::string& dir) {
    std::ifstream f(dir + "/params.json");
    if (!f) throw TensorError("cannot open checkpoint manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(f);
    ModelParams p;
    auto target_names = p.tensor_names();
    auto targets = p.tensors();
    for (std::size_t i = 0; i < target_names.size(); ++i) {
        const auto& entry = manifest.at("tensors").at(target_names[i]);
        *targets[i] = load_tensor(dir + "/" + entry.at("file").get<std::string>());
    }
    return p;
}

}  // namespace gm
