#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gm/affinity.hpp"
#include "gm/blackbox.hpp"
#include "gm/encoder.hpp"
#include "gm/synth.hpp"

namespace gm {

struct TrainConfig {
    std::size_t N = 16;
    std::size_t k = 5;
    double lambda = 80.0;
    double alpha = 0.8;
    std::size_t gamma = 10;
    std::size_t F = 128;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t steps = 300;
    std::uint64_t seed = 1;
    double clip_norm = 1.0;
    SolverCfg solver;
    BatchCfg data;
    bool zero_noise = false;  // test hook: skip Gumbel perturbation

    void validate() const;  // throws DomainError naming the bad field
};

struct MetricsRecord {
    std::size_t step = 0;
    double loss = 0.0;               // Hamming loss of the (perturbed) train solve
    double matching_accuracy = 0.0;  // fixed points of the noise-free eval solve
    double grad_norm_pre_clip = 0.0;
    double wall_ms = 0.0;

    std::string to_jsonl() const;
};

struct SslStepResult {
    double loss = 0.0;
    ModelGrads grads;
    MetricsRecord metrics;
};

/// One full pass of the matching objective: forward chain, Gumbel perturb,
/// solve, Hamming loss against the identity target, blackbox gradient, chain
/// rule back into every parameter tensor.
SslStepResult ssl_step(const ViewBatch& xs, const ViewBatch& xt,
                       const ModelParams& params, const TrainConfig& cfg,
                       RngStream& rng);

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t t = 0;

    static AdamState zeros_like(const ModelParams& p);
};

void adam_update(ModelParams& params, ModelGrads& grads, AdamState& state,
                 const TrainConfig& cfg);

double matching_accuracy(const Matching& m);

struct TrainResult {
    ModelParams params;
    std::vector<MetricsRecord> metrics;
};

/// Full run; metrics to <out_dir>/metrics.jsonl, checkpoint to
/// <out_dir>/checkpoint/. dataset_dir switches from fresh synthetic batches
/// to a fixed file-backed batch.
TrainResult train_run(const TrainConfig& cfg, const std::string& out_dir,
                      const std::optional<std::string>& dataset_dir = {});

struct SweepCell {
    TrainConfig cfg;
    std::string label;
};

/// One reduced-steps train_run per cell; returns the CSV text (header +
/// one row per cell; failed cells recorded with status=error). Cells run on
/// a pool of `threads` workers; row order follows the grid regardless.
std::string sweep_run(const std::vector<SweepCell>& grid, std::size_t threads = 0);

}  // namespace gm
