#pragma once

#include <string>
#include <vector>

#include "gm/graph.hpp"
#include "gm/rng.hpp"
#include "gm/tensor.hpp"

namespace gm {

struct LinearLayer {
    Tensor W;  // out x in
    Tensor b;  // out
};

struct GcnLayer {
    Tensor W;  // out x in
    Tensor b;  // out
};

/// Trainable chain: 1x1 channel-mixing encoder (D->D, ReLU), average pool +
/// linear projector (D->F), two graph-convolution layers (F->F).
struct ModelParams {
    LinearLayer encoder;
    LinearLayer projector;
    GcnLayer gnn[2];

    static ModelParams init(RngStream& rng, std::size_t D, std::size_t F);
    static ModelParams identity(std::size_t D);  // test hook, requires F == D

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> tensor_names() const;
};

/// Gradients mirror ModelParams tensor-for-tensor.
struct ModelGrads {
    LinearLayer encoder;
    LinearLayer projector;
    GcnLayer gnn[2];

    static ModelGrads zeros_like(const ModelParams& p);
    std::vector<Tensor*> tensors();
};

struct EncoderCtx {
    Tensor x;  // input, kept for backward
    Tensor y;  // output (post-ReLU)
};

/// y[n,:,r,s] = ReLU(W x[n,:,r,s] + b).
Tensor encoder_forward(const Tensor& x, const ModelParams& p, EncoderCtx& ctx);
Tensor encoder_backward(const Tensor& dy, const ModelParams& p, const EncoderCtx& ctx,
                        ModelGrads& g);

struct PoolProjectCtx {
    Tensor pooled;  // N x D spatial means
    std::size_t R = 0, S = 0;
};

/// z = W mean_{r,s}(y) + b, no nonlinearity.
Tensor pool_project_forward(const Tensor& y, const ModelParams& p, PoolProjectCtx& ctx);
Tensor pool_project_backward(const Tensor& dz, const ModelParams& p,
                             const PoolProjectCtx& ctx, ModelGrads& g);

struct GnnCtx {
    Tensor prop;  // N x N row-normalized (A + I), A = symmetrized kNN adjacency
    Tensor h0, ph0, h1, ph1;  // layer inputs and propagated activations
};

/// Two layers of H' = P H W^T + b with ReLU after the first only.
Tensor gnn_forward(const Graph& graph, const Tensor& z, const ModelParams& p,
                   GnnCtx& ctx);
Tensor gnn_backward(const Tensor& dzhat, const ModelParams& p, const GnnCtx& ctx,
                    ModelGrads& g);

/// Checkpoint: <dir>/params.json manifest + one GMT0 file per tensor.
void save_checkpoint(const std::string& dir, const ModelParams& p);
ModelParams load_checkpoint(const std::string& dir);

}  // namespace gm
