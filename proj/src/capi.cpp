#include "gmssl.h"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "gm/config.hpp"
#include "gm/mathkit.hpp"
#include "gm/trainer.hpp"
#include "gm/uncertainty.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

enum : int { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

struct gmssl_ctx {
    std::string last_error;
};

extern "C" {

gmssl_ctx* gmssl_ctx_new(void) { return new gmssl_ctx(); }

void gmssl_ctx_free(gmssl_ctx* ctx) { delete ctx; }

const char* gmssl_last_error(const gmssl_ctx* ctx) {
    return ctx ? ctx->last_error.c_str() : "";
}

const char* gmssl_version(void) { return kVersion; }

const char* gmssl_config_schema_hash(void) {
    static const std::string hash = gm::config_schema_hash();
    return hash.c_str();
}

void gmssl_string_free(char* s) { std::free(s); }

}  // extern "C"

namespace {

template <typename Fn>
int run_guarded(gmssl_ctx* ctx, Fn&& fn) {
    try {
        fn();
        if (ctx) ctx->last_error.clear();
        return kOk;
    } catch (const gm::ConfigError& e) {
        if (ctx) ctx->last_error = e.what();
        return kConfigError;
    } catch (const gm::DomainError& e) {
        if (ctx) ctx->last_error = e.what();
        return kConfigError;
    } catch (const gm::NumericError& e) {
        if (ctx) ctx->last_error = e.what();
        return kNumericError;
    } catch (const std::exception& e) {
        if (ctx) ctx->last_error = e.what();
        return kIoError;
    }
}

std::string opt(const char* s) { return s ? s : ""; }

}  // namespace

extern "C" {

int gmssl_effective_config(gmssl_ctx* ctx, const char* config_json,
                           char** out_json) {
    return run_guarded(ctx, [&] {
        const gm::TrainConfig cfg = gm::parse_train_config(opt(config_json));
        if (out_json) *out_json = dup_string(gm::train_config_to_json(cfg));
    });
}

int gmssl_gen_data(gmssl_ctx* ctx, const char* config_json, const char* out_dir) {
    return run_guarded(ctx, [&] {
        if (!out_dir) throw gm::ConfigError("gen-data requires an output directory");
        const gm::TrainConfig cfg = gm::parse_train_config(opt(config_json));
        gm::RngStream rng(cfg.seed);
        gm::ViewBatch xs, xt;
        gm::make_batch(rng, cfg.N, cfg.data, xs, xt);
        gm::save_batch_dir(out_dir, xs, xt, cfg.data, cfg.seed);
    });
}

int gmssl_train_ssl(gmssl_ctx* ctx, const char* config_json, const char* out_dir,
                    const char* dataset_dir) {
    return run_guarded(ctx, [&] {
        if (!out_dir) throw gm::ConfigError("train-ssl requires an output directory");
        const gm::TrainConfig cfg = gm::parse_train_config(opt(config_json));
        std::optional<std::string> dataset;
        if (dataset_dir) dataset = dataset_dir;
        gm::train_run(cfg, out_dir, dataset);
    });
}

int gmssl_eval_match(gmssl_ctx* ctx, const char* config_json, const char* batch_dir,
                     const char* checkpoint_dir, const char* out_dir,
                     int dump_graph, int dump_affinities, char** out_json) {
    return run_guarded(ctx, [&] {
        if (!batch_dir) throw gm::ConfigError("eval-match requires a batch directory");
        gm::TrainConfig cfg = gm::parse_train_config(opt(config_json));
        gm::ViewBatch xs, xt;
        gm::load_batch_dir(batch_dir, xs, xt);
        const std::size_t n = xs.y.extent(0);
        const std::size_t d = xs.y.extent(1);
        if (cfg.k >= n) throw gm::ConfigError("k must be below the batch size");

        gm::ModelParams params;
        if (checkpoint_dir) {
            params = gm::load_checkpoint(checkpoint_dir);
        } else {
            gm::RngStream rng(cfg.seed);
            params = gm::ModelParams::init(rng, d, cfg.F);
        }

        gm::EncoderCtx enc_s, enc_t;
        const gm::Tensor ys = gm::encoder_forward(xs.y, params, enc_s);
        const gm::Tensor yt = gm::encoder_forward(xt.y, params, enc_t);
        gm::PoolProjectCtx pp_s, pp_t;
        const gm::Tensor zs = gm::pool_project_forward(ys, params, pp_s);
        const gm::Tensor zt = gm::pool_project_forward(yt, params, pp_t);
        const gm::Graph gs = gm::knn_graph(zs, cfg.k);
        const gm::Graph gt = gm::knn_graph(zt, cfg.k);
        gm::GnnCtx gc_s, gc_t;
        const gm::Tensor zhs = gm::gnn_forward(gs, zs, params, gc_s);
        const gm::Tensor zht = gm::gnn_forward(gt, zt, params, gc_t);
        gm::AffinityCaches caches;
        const gm::AffinitySet affs = gm::build_affinities(
            zhs, zht, {ys, xs.pos}, {yt, xt.pos}, gs, gt, cfg.alpha, cfg.gamma,
            caches);
        gm::RngStream solver_rng(cfg.seed);
        const gm::Matching m = gm::gm_solve(affs, gs, gt, cfg.solver, solver_rng);

        gm::Tensor v_star({n, n});
        for (std::size_t i = 0; i < n; ++i) v_star.at2(i, i) = 1.0f;
        const auto hl = gm::hamming_loss_and_grad(m.indicator(), v_star);

        if ((dump_graph || dump_affinities) && !out_dir) {
            throw gm::ConfigError("--dump-graph/--dump-affinities require --out");
        }
        if (out_dir) std::filesystem::create_directories(out_dir);
        if (dump_graph) {
            for (const auto& [g, name] :
                 {std::pair{&gs, "graph_s.csv"}, std::pair{&gt, "graph_t.csv"}}) {
                std::string csv = "i,j\n";
                for (const auto& [i, j] : g->edges) {
                    csv += std::to_string(i) + "," + std::to_string(j) + "\n";
                }
                gm::atomic_write_text(std::string(out_dir) + "/" + name, csv);
            }
        }
        if (dump_affinities) {
            gm::save_tensor(std::string(out_dir) + "/cv.gmt", affs.cv);
            std::string csv = "i,j,a,b,value\n";
            char row[128];
            for (std::size_t e = 0; e < gs.edges.size(); ++e) {
                for (std::size_t t = 0; t < gt.edges.size(); ++t) {
                    std::snprintf(row, sizeof(row), "%d,%d,%d,%d,%.9g\n",
                                  gs.edges[e].first, gs.edges[e].second,
                                  gt.edges[t].first, gt.edges[t].second,
                                  static_cast<double>(affs.ce.at2(e, t)));
                    csv += row;
                }
            }
            gm::atomic_write_text(std::string(out_dir) + "/ce.csv", csv);
        }

        nlohmann::json result;
        result["loss"] = hl.loss;
        result["matching_accuracy"] = gm::matching_accuracy(m);
        result["perm"] = m.perm;
        if (out_json) *out_json = dup_string(result.dump());
    });
}

int gmssl_sweep(gmssl_ctx* ctx, const char* grid_json, const char* out_csv,
                unsigned threads) {
    return run_guarded(ctx, [&] {
        if (!out_csv) throw gm::ConfigError("sweep requires an output CSV path");
        const auto grid = gm::parse_sweep_grid(opt(grid_json));
        gm::atomic_write_text(out_csv, gm::sweep_run(grid, threads));
    });
}

int gmssl_solver_bench(gmssl_ctx* ctx, unsigned max_n, unsigned long long seed,
                       const char* out_csv) {
    return run_guarded(ctx, [&] {
        if (!out_csv) throw gm::ConfigError("solver-bench requires an output path");
        if (max_n < 4 || max_n > 16) {
            throw gm::ConfigError("solver-bench max_n must lie in [4, 16]");
        }
        std::string csv = "N,method,score,optimal_ratio\n";
        char row[160];
        gm::SolverCfg exact_cfg;
        exact_cfg.exact_threshold = 8;
        gm::SolverCfg heur_cfg;
        heur_cfg.exact_threshold = 0;  // force the heuristic path
        for (unsigned n = 4; n <= max_n; ++n) {
            gm::RngStream rng(seed + n);
            const std::size_t k = std::min<std::size_t>(3, n - 1);
            gm::Tensor z({n, 4});
            for (float& v : z.span()) v = static_cast<float>(rng.next_gaussian());
            const gm::Graph gs = gm::knn_graph(z, k);
            for (float& v : z.span()) v = static_cast<float>(rng.next_gaussian());
            const gm::Graph gt = gm::knn_graph(z, k);
            gm::AffinitySet affs;
            affs.cv = gm::Tensor({n, n});
            for (float& v : affs.cv.span()) {
                v = static_cast<float>(rng.next_uniform(-1.0, 1.0));
            }
            affs.ce = gm::Tensor({gs.edges.size(), gt.edges.size()});
            for (float& v : affs.ce.span()) {
                v = static_cast<float>(rng.next_uniform(-0.5, 0.5));
            }
            double exact_score = 0.0;
            const bool have_exact = n <= exact_cfg.exact_threshold;
            if (have_exact) {
                gm::RngStream r2 = rng.split(1);
                const gm::Matching m =
                    gm::gm_solve(affs, gs, gt, exact_cfg, r2);
                exact_score = gm::match_score(m, affs, gs, gt);
                std::snprintf(row, sizeof(row), "%u,exact,%.9g,1\n", n, exact_score);
                csv += row;
            }
            gm::RngStream r3 = rng.split(2);
            const gm::Matching hm = gm::gm_solve_heuristic(affs, gs, gt, heur_cfg, r3);
            const double hs = gm::match_score(hm, affs, gs, gt);
            if (have_exact) {
                std::snprintf(row, sizeof(row), "%u,heuristic,%.9g,%.9g\n", n, hs,
                              hs / exact_score);
            } else {
                std::snprintf(row, sizeof(row), "%u,heuristic,%.9g,\n", n, hs);
            }
            csv += row;
        }
        gm::atomic_write_text(out_csv, csv);
    });
}

int gmssl_train_uq(gmssl_ctx* ctx, const char* config_json, const char* out_dir) {
    return run_guarded(ctx, [&] {
        if (!out_dir) throw gm::ConfigError("train-uq requires an output directory");
        const gm::UQTrainConfig cfg = gm::parse_uq_config(opt(config_json));
        const gm::UQTrainResult r = gm::train_uq(cfg);
        gm::save_uq_head(out_dir, r.head);
        nlohmann::json log;
        log["epoch_loss"] = r.epoch_loss;
        gm::atomic_write_text(std::string(out_dir) + "/train_log.json",
                              log.dump(2) + "\n");
    });
}

int gmssl_eval_ood(gmssl_ctx* ctx, const char* head_dir, const char* grid_json,
                   unsigned long long seed, const char* out_json_path,
                   char** out_json) {
    return run_guarded(ctx, [&] {
        if (!head_dir) throw gm::ConfigError("eval-ood requires a head directory");
        const gm::UQHead head = gm::load_uq_head(head_dir);
        const gm::OodEvalCfg cfg = gm::parse_ood_grid(opt(grid_json));
        const gm::OodReport report =
            gm::eval_ood(head, cfg.levels, cfg.images_per_level, cfg.H, seed);
        const std::string json_text = report.to_json();
        if (out_json_path) {
            gm::atomic_write_text(out_json_path, json_text);
            std::string csv_path = out_json_path;
            const auto dot = csv_path.rfind('.');
            csv_path = csv_path.substr(0, dot == std::string::npos ? csv_path.size()
                                                                   : dot) +
                       ".csv";
            gm::atomic_write_text(csv_path, report.to_csv());
        }
        if (out_json) *out_json = dup_string(json_text);
    });
}

}  // extern "C"
