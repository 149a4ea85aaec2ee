#include "gm/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "gm/mathkit.hpp"

namespace gm {

void TrainConfig::validate() const {
    if (N < 2) throw DomainError("N must be >= 2");
    if (k < 1 || k >= N) throw DomainError("k must satisfy 1 <= k < N");
    if (!(lambda > 0.0)) throw DomainError("lambda must be > 0");
    if (alpha < 0.0 || alpha > 1.0) throw DomainError("alpha must lie in [0, 1]");
    if (gamma < 1) throw DomainError("gamma must be >= 1");
    if (F < 1) throw DomainError("F must be >= 1");
    if (!(lr > 0.0)) throw DomainError("lr must be > 0");
    if (!(clip_norm > 0.0)) throw DomainError("clip_norm must be > 0");
    if (solver.exact_threshold > 10) {
        throw DomainError("solver.exact_threshold must be <= 10");
    }
    if (data.D < 1 || data.G < 4) throw DomainError("data.D >= 1 and data.G >= 4 required");
    if (data.R < 2 || data.S < 2) throw DomainError("data.R and data.S must be >= 2");
    if (data.crop_min < 0.25 || data.crop_min > 1.0) {
        throw DomainError("data.crop_min must lie in [0.25, 1]");
    }
}

std::string MetricsRecord::to_jsonl() const {
    // wall_ms is intentionally not serialized: metrics.jsonl is covered by the
    // byte-identical reproducibility contract.
    nlohmann::json j;
    j["step"] = step;
    j["loss"] = loss;
    j["matching_accuracy"] = matching_accuracy;
    j["grad_norm_pre_clip"] = grad_norm_pre_clip;
    return j.dump();
}

namespace {

void check_stage(const Tensor& t, const char* stage) {
    try {
        t.check_finite(stage);
    } catch (const TensorError& e) {
        throw NumericError(std::string("numeric failure at stage ") + e.what());
    }
}

Matching identity_matching(std::size_t n) {
    Matching m;
    m.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.perm[i] = static_cast<int>(i);
    return m;
}

}  // namespace

SslStepResult ssl_step(const ViewBatch& xs, const ViewBatch& xt,
                       const ModelParams& params, const TrainConfig& cfg,
                       RngStream& rng) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = xs.y.extent(0);

    EncoderCtx enc_s, enc_t;
    const Tensor ys = encoder_forward(xs.y, params, enc_s);
    const Tensor yt = encoder_forward(xt.y, params, enc_t);
    check_stage(ys, "encoder");

    PoolProjectCtx pp_s, pp_t;
    const Tensor zs = pool_project_forward(ys, params, pp_s);
    const Tensor zt = pool_project_forward(yt, params, pp_t);
    check_stage(zs, "projector");

    const Graph gs = knn_graph(zs, cfg.k);
    const Graph gt = knn_graph(zt, cfg.k);

    GnnCtx gnn_s, gnn_t;
    const Tensor zhat_s = gnn_forward(gs, zs, params, gnn_s);
    const Tensor zhat_t = gnn_forward(gt, zt, params, gnn_t);
    check_stage(zhat_s, "gnn");

    // local costs ignore the encoder ReLU only through ys/yt, which are what
    // the pseudo-code feeds them
    ViewBatch vs{ys, xs.pos}, vt{yt, xt.pos};
    AffinityCaches caches;
    AffinitySet affs = build_affinities(zhat_s, zhat_t, vs, vt, gs, gt, cfg.alpha,
                                        cfg.gamma, caches);
    check_stage(affs.cv, "affinity");

    const AffinitySet solve_affs = cfg.zero_noise ? affs : perturb(affs, rng);
    RngStream solver_rng = rng.split(0x5e1f);
    const Matching v_hat = gm_solve(solve_affs, gs, gt, cfg.solver, solver_rng);

    const Tensor v_star = identity_matching(n).indicator();
    auto [loss, dLdv] = hamming_loss_and_grad(v_hat.indicator(), v_star);

    RngStream grad_rng = rng.split(0x6a0b);
    const SolverGrads sg = solver_grad(solve_affs, gs, gt, v_hat, dLdv,
                                       {cfg.lambda}, cfg.solver, grad_rng);

    const AffinityGrads ag = affinity_backward(sg.dcv, sg.dce, caches, zhat_s,
                                               zhat_t, vs, vt, gs, gt, cfg.alpha);
    check_stage(ag.dzs, "affinity backward");

    SslStepResult res;
    res.grads = ModelGrads::zeros_like(params);
    const Tensor dz_s = gnn_backward(ag.dzs, params, gnn_s, res.grads);
    const Tensor dz_t = gnn_backward(ag.dzt, params, gnn_t, res.grads);
    Tensor dy_s = pool_project_backward(dz_s, params, pp_s, res.grads);
    Tensor dy_t = pool_project_backward(dz_t, params, pp_t, res.grads);
    for (std::size_t i = 0; i < dy_s.numel(); ++i) {
        dy_s[i] += ag.dys[i];
        dy_t[i] += ag.dyt[i];
    }
    encoder_backward(dy_s, params, enc_s, res.grads);
    encoder_backward(dy_t, params, enc_t, res.grads);
    for (const Tensor* g : res.grads.tensors()) check_stage(*g, "parameter gradients");

    // perturbation-free evaluation solve for the accuracy metric
    RngStream eval_rng = rng.split(0xe7a1);
    const Matching v_eval = gm_solve(affs, gs, gt, cfg.solver, eval_rng);

    res.loss = loss;
    res.metrics.loss = loss;
    res.metrics.matching_accuracy = matching_accuracy(v_eval);
    res.metrics.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                  t0)
            .count();
    return res;
}

AdamState AdamState::zeros_like(const ModelParams& p) {
    AdamState s;
    for (const Tensor* t : p.tensors()) {
        s.m.emplace_back(t->shape());
        s.v.emplace_back(t->shape());
    }
    return s;
}

void adam_update(ModelParams& params, ModelGrads& grads, AdamState& state,
                 const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto ps = params.tensors();
    auto gs = grads.tensors();
    for (std::size_t ti = 0; ti < ps.size(); ++ti) {
        Tensor& p = *ps[ti];
        const Tensor& g = *gs[ti];
        Tensor& m = state.m[ti];
        Tensor& v = state.v[ti];
        if (!p.same_shape(g)) throw DomainError("adam_update: shape mismatch");
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            p[i] = static_cast<float>(
                p[i] - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps));
        }
    }
}

double matching_accuracy(const Matching& m) {
    std::size_t fixed = 0;
    for (std::size_t i = 0; i < m.perm.size(); ++i) {
        if (m.perm[i] == static_cast<int>(i)) ++fixed;
    }
    return static_cast<double>(fixed) / static_cast<double>(m.perm.size());
}

TrainResult train_run(const TrainConfig& cfg, const std::string& out_dir,
                      const std::optional<std::string>& dataset_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    if (!out_dir.empty()) fs::create_directories(out_dir);

    RngStream rng(cfg.seed);
    ModelParams params = ModelParams::init(rng, cfg.data.D, cfg.F);
    AdamState adam = AdamState::zeros_like(params);

    ViewBatch fixed_xs, fixed_xt;
    if (dataset_dir) load_batch_dir(*dataset_dir, fixed_xs, fixed_xt);

    TrainResult result;
    std::string metrics_text;
    bool failed = false;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        try {
            ViewBatch xs, xt;
            if (dataset_dir) {
                xs = fixed_xs;
                xt = fixed_xt;
            } else {
                RngStream batch_rng = rng.split(0xba7c + step);
                make_batch(batch_rng, cfg.N, cfg.data, xs, xt);
            }
            SslStepResult sr = ssl_step(xs, xt, params, cfg, rng);
            auto grad_list = sr.grads.tensors();
            sr.metrics.grad_norm_pre_clip = clip_global_norm(grad_list, cfg.clip_norm);
            adam_update(params, sr.grads, adam, cfg);
            sr.metrics.step = step;
            metrics_text += sr.metrics.to_jsonl() + "\n";
            result.metrics.push_back(sr.metrics);
        } catch (const NumericError&) {
            failed = true;  // checkpoint below holds the last good step
            break;
        }
    }
    result.params = params;
    if (!out_dir.empty()) {
        atomic_write_text(out_dir + "/metrics.jsonl", metrics_text);
        save_checkpoint(out_dir + "/checkpoint", params);
    }
    if (failed) {
        throw NumericError("training aborted on numeric failure; checkpoint holds "
                           "the last good step");
    }
    return result;
}

std::string sweep_run(const std::vector<SweepCell>& grid, std::size_t threads) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    std::vector<std::string> rows(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        char row[512];
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= grid.size()) return;
            const SweepCell& cell = grid[idx];
            const TrainConfig& c = cell.cfg;
            double final_loss = 0.0, final_acc = 0.0;
            const char* status = "ok";
            try {
                TrainResult r = train_run(c, "");
                if (!r.metrics.empty()) {
                    final_loss = r.metrics.back().loss;
                    final_acc = r.metrics.back().matching_accuracy;
                }
            } catch (const std::exception&) {
                status = "error";
            }
            std::snprintf(row, sizeof(row),
                          "%s,%zu,%zu,%g,%g,%zu,%zu,%llu,%s,%g,%g\n",
                          cell.label.c_str(), c.N, c.k, c.lambda, c.alpha, c.gamma,
                          c.steps, static_cast<unsigned long long>(c.seed), status,
                          final_loss, final_acc);
            rows[idx] = row;
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t + 1 < std::min(threads, grid.size()); ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (std::thread& t : pool) t.join();

    std::string csv =
        "label,N,k,lambda,alpha,gamma,steps,seed,status,final_loss,"
        "final_matching_accuracy\n";
    for (const std::string& r : rows) csv += r;
    return csv;
}

}  // namespace gm
