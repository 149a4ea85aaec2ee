// Single entry-point CLI; all work goes through the C API in gmssl.h.
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmssl.h"

namespace {

// Load --config (or "{}") and fold in the --seed override.
std::string effective_config_text(const std::string& config_path,
                                  const std::optional<unsigned long long>& seed) {
    std::string text = "{}";
    if (!config_path.empty()) {
        std::FILE* f = std::fopen(config_path.c_str(), "rb");
        if (!f) {
            std::fprintf(stderr, "error: cannot open config file %s\n",
                         config_path.c_str());
            std::exit(2);
        }
        text.clear();
        char buf[4096];
        std::size_t got;
        while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) {
            text.append(buf, got);
        }
        std::fclose(f);
    }
    if (seed) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            std::fprintf(stderr, "error: invalid JSON in %s: %s\n",
                         config_path.c_str(), e.what());
            std::exit(2);
        }
        j["seed"] = *seed;
        text = j.dump();
    }
    return text;
}

int finish(gmssl_ctx* ctx, int rc) {
    if (rc != 0) std::fprintf(stderr, "error: %s\n", gmssl_last_error(ctx));
    gmssl_ctx_free(ctx);
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-matching SSL engine with post-hoc uncertainty"};
    app.require_subcommand(0, 1);

    bool show_version = false;
    app.add_flag("--version", show_version, "print version and config-schema hash");

    std::string config_path, out, dataset, batch, checkpoint, head, grid_path;
    std::optional<unsigned long long> seed;
    unsigned threads = 0;
    bool dump_graph = false, dump_affinities = false, print_config = false;
    unsigned max_n = 16;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic two-view batch");
    gen->add_option("--config", config_path, "JSON config file");
    gen->add_option("--seed", seed, "seed override");
    gen->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train-ssl", "run the SSL training loop");
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--seed", seed, "seed override");
    train->add_option("--out", out, "output directory");
    train->add_option("--dataset", dataset, "fixed batch directory");
    train->add_flag("--print-config", print_config,
                    "echo the effective config and exit");

    auto* eval = app.add_subcommand("eval-match", "noise-free match on a batch");
    eval->add_option("--config", config_path, "JSON config file");
    eval->add_option("--seed", seed, "seed override");
    eval->add_option("--batch", batch, "batch directory")->required();
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
    eval->add_option("--out", out, "directory for dumps");
    eval->add_flag("--dump-graph", dump_graph, "write graph edge lists as CSV");
    eval->add_flag("--dump-affinities", dump_affinities,
                   "write cv as GMT0 and ce as CSV");

    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
    sweep->add_option("--config", config_path, "JSON grid file")->required();
    sweep->add_option("--seed", seed, "seed override");
    sweep->add_option("--out", out, "output CSV path")->required();
    sweep->add_option("--threads", threads, "worker pool size (0 = machine)");

    auto* bench = app.add_subcommand("solver-bench", "random-instance solver CSV");
    bench->add_option("--max-n", max_n, "largest instance size (4..16)");
    bench->add_option("--seed", seed, "instance seed");
    bench->add_option("--out", out, "output CSV path")->required();

    auto* tuq = app.add_subcommand("train-uq", "train the uncertainty head");
    tuq->add_option("--config", config_path, "JSON config file");
    tuq->add_option("--seed", seed, "seed override");
    tuq->add_option("--out", out, "head output directory")->required();

    auto* ood = app.add_subcommand("eval-ood", "uncertainty vs shift report");
    ood->add_option("--head", head, "trained head directory")->required();
    ood->add_option("--grid", grid_path, "shift grid JSON file");
    ood->add_option("--seed", seed, "evaluation seed");
    ood->add_option("--out", out, "report JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    if (show_version) {
        std::printf("gmssl %s (config-schema %s)\n", gmssl_version(),
                    gmssl_config_schema_hash());
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::fprintf(stderr, "%s", app.help().c_str());
        return 2;
    }

    gmssl_ctx* ctx = gmssl_ctx_new();
    const std::string cfg = effective_config_text(config_path, seed);

    if (gen->parsed()) {
        return finish(ctx, gmssl_gen_data(ctx, cfg.c_str(), out.c_str()));
    }
    if (train->parsed()) {
        if (print_config) {
            char* text = nullptr;
            const int rc = gmssl_effective_config(ctx, cfg.c_str(), &text);
            if (rc == 0) {
                std::printf("%s", text);
                gmssl_string_free(text);
            }
            return finish(ctx, rc);
        }
        if (out.empty()) {
            std::fprintf(stderr, "error: train-ssl requires --out\n");
            gmssl_ctx_free(ctx);
            return 2;
        }
        return finish(ctx, gmssl_train_ssl(ctx, cfg.c_str(), out.c_str(),
                                           dataset.empty() ? nullptr
                                                           : dataset.c_str()));
    }
    if (eval->parsed()) {
        char* result = nullptr;
        const int rc = gmssl_eval_match(
            ctx, cfg.c_str(), batch.c_str(),
            checkpoint.empty() ? nullptr : checkpoint.c_str(),
            out.empty() ? nullptr : out.c_str(), dump_graph ? 1 : 0,
            dump_affinities ? 1 : 0, &result);
        if (rc == 0) {
            std::printf("%s\n", result);
            gmssl_string_free(result);
        }
        return finish(ctx, rc);
    }
    if (sweep->parsed()) {
        return finish(ctx, gmssl_sweep(ctx, cfg.c_str(), out.c_str(), threads));
    }
    if (bench->parsed()) {
        return finish(ctx, gmssl_solver_bench(ctx, max_n, seed.value_or(1),
                                              out.c_str()));
    }
    if (tuq->parsed()) {
        return finish(ctx, gmssl_train_uq(ctx, cfg.c_str(), out.c_str()));
    }
    if (ood->parsed()) {
        std::string grid_text = "{}";
        if (!grid_path.empty()) {
            grid_text = effective_config_text(grid_path, std::nullopt);
        }
        char* result = nullptr;
        const int rc = gmssl_eval_ood(ctx, head.c_str(), grid_text.c_str(),
                                      seed.value_or(1), out.c_str(), &result);
        if (rc == 0) {
            std::printf("%s", result);
            gmssl_string_free(result);
        }
        return finish(ctx, rc);
    }
    gmssl_ctx_free(ctx);
    return 2;
}
