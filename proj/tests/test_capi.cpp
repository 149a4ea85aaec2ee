#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "gmssl.h"

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const char* kTinyCfg =
    "{\"N\": 4, \"k\": 2, \"F\": 4, \"gamma\": 4, \"steps\": 2, \"seed\": 3, "
    "\"data\": {\"D\": 3, \"G\": 8, \"R\": 3, \"S\": 3}}";

struct Ctx {
    gmssl_ctx* p = gmssl_ctx_new();
    ~Ctx() { gmssl_ctx_free(p); }
};

}  // namespace

TEST_CASE("version and schema hash") {
    CHECK(std::string(gmssl_version()) == "0.1.0");
    const std::string hash = gmssl_config_schema_hash();
    CHECK(hash.size() == 16);
}

TEST_CASE("effective config echoes defaults and rejects bad keys") {
    Ctx ctx;
    char* out = nullptr;
    CHECK(gmssl_effective_config(ctx.p, "{}", &out) == 0);
    REQUIRE(out != nullptr);
    const std::string text(out);
    gmssl_string_free(out);
    CHECK(text.find("\"N\": 16") != std::string::npos);
    CHECK(text.find("\"lambda\": 80") != std::string::npos);
    CHECK(text.find("\"alpha\": 0.8") != std::string::npos);

    CHECK(gmssl_effective_config(ctx.p, "{\"alpha\": 1.5}", nullptr) == 2);
    CHECK(std::string(gmssl_last_error(ctx.p)).find("alpha") != std::string::npos);

    CHECK(gmssl_effective_config(ctx.p, "{\"nope\": 1}", nullptr) == 2);
    CHECK(std::string(gmssl_last_error(ctx.p)).find("nope") != std::string::npos);

    CHECK(gmssl_effective_config(ctx.p, "not json", nullptr) == 2);
}

TEST_CASE("gen-data, train-ssl and eval-match round trip") {
    Ctx ctx;
    const fs::path base = fs::temp_directory_path() / "gm_capi_pipeline";
    fs::remove_all(base);
    const fs::path batch = base / "batch";
    REQUIRE(gmssl_gen_data(ctx.p, kTinyCfg, batch.c_str()) == 0);
    CHECK(fs::exists(batch / "ys.gmt"));
    CHECK(fs::exists(batch / "pos_s.gmt"));
    CHECK(fs::exists(batch / "yt.gmt"));
    CHECK(fs::exists(batch / "pos_t.gmt"));
    CHECK(fs::exists(batch / "manifest.json"));

    const fs::path run = base / "run";
    REQUIRE(gmssl_train_ssl(ctx.p, kTinyCfg, run.c_str(), batch.c_str()) == 0);
    CHECK(fs::exists(run / "metrics.jsonl"));
    CHECK(fs::exists(run / "checkpoint" / "params.json"));

    const fs::path evald = base / "eval";
    char* out = nullptr;
    REQUIRE(gmssl_eval_match(ctx.p, kTinyCfg, batch.c_str(),
                             (run / "checkpoint").c_str(), evald.c_str(), 1, 1,
                             &out) == 0);
    REQUIRE(out != nullptr);
    const std::string report(out);
    gmssl_string_free(out);
    CHECK(report.find("loss") != std::string::npos);
    CHECK(report.find("matching_accuracy") != std::string::npos);
    CHECK(fs::exists(evald / "graph_s.csv"));
    CHECK(fs::exists(evald / "graph_t.csv"));
    CHECK(fs::exists(evald / "cv.gmt"));
    CHECK(fs::exists(evald / "ce.csv"));
    const std::string ce = slurp(evald / "ce.csv");
    CHECK(ce.rfind("i,j,a,b,value", 0) == 0);
}

TEST_CASE("train-ssl reruns are byte-identical") {
    Ctx ctx;
    const fs::path base = fs::temp_directory_path() / "gm_capi_det";
    fs::remove_all(base);
    REQUIRE(gmssl_train_ssl(ctx.p, kTinyCfg, (base / "a").c_str(), nullptr) == 0);
    REQUIRE(gmssl_train_ssl(ctx.p, kTinyCfg, (base / "b").c_str(), nullptr) == 0);
    CHECK(slurp(base / "a" / "metrics.jsonl") == slurp(base / "b" / "metrics.jsonl"));
    CHECK(slurp(base / "a" / "checkpoint" / "params.json") ==
          slurp(base / "b" / "checkpoint" / "params.json"));
}

TEST_CASE("missing batch directory is an I/O error") {
    Ctx ctx;
    char* out = nullptr;
    const int rc = gmssl_eval_match(ctx.p, kTinyCfg, "/nonexistent/batch", nullptr,
                                    nullptr, 0, 0, &out);
    CHECK(rc != 0);
    CHECK(std::string(gmssl_last_error(ctx.p)).size() > 0);
}

TEST_CASE("sweep writes a CSV with one row per cell") {
    Ctx ctx;
    const fs::path base = fs::temp_directory_path() / "gm_capi_sweep";
    fs::remove_all(base);
    fs::create_directories(base);
    const fs::path csv = base / "sweep.csv";
    const char* grid =
        "{\"N\": [4], \"alpha\": [0.7, 0.9], \"steps\": 1, "
        "\"base\": {\"F\": 4, \"gamma\": 4, \"k\": 2, "
        "\"data\": {\"D\": 3, \"G\": 8, \"R\": 3, \"S\": 3}}}";
    REQUIRE(gmssl_sweep(ctx.p, grid, csv.c_str(), 2) == 0);
    const std::string text = slurp(csv);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2 rows
    CHECK(text.find("a0.7") != std::string::npos);
    CHECK(text.find("a0.9") != std::string::npos);
}

TEST_CASE("solver bench fills optimal_ratio in the exact regime") {
    Ctx ctx;
    const fs::path base = fs::temp_directory_path() / "gm_capi_bench";
    fs::remove_all(base);
    fs::create_directories(base);
    const fs::path csv = base / "bench.csv";
    REQUIRE(gmssl_solver_bench(ctx.p, 6, 11, csv.c_str()) == 0);
    const std::string text = slurp(csv);
    CHECK(text.rfind("N,method,score,optimal_ratio", 0) == 0);
    // every data row has a filled final column
    std::size_t pos = text.find('\n');
    while (pos != std::string::npos && pos + 1 < text.size()) {
        const std::size_t end = text.find('\n', pos + 1);
        const std::string row = text.substr(pos + 1, end - pos - 1);
        if (!row.empty()) {
            const std::size_t last_comma = row.rfind(',');
            CHECK(last_comma + 1 < row.size());
        }
        pos = end;
    }
    CHECK(gmssl_solver_bench(ctx.p, 3, 11, csv.c_str()) == 2);   // below range
    CHECK(gmssl_solver_bench(ctx.p, 40, 11, csv.c_str()) == 2);  // above range
}

TEST_CASE("uq training and ood evaluation through the C API") {
    Ctx ctx;
    const fs::path base = fs::temp_directory_path() / "gm_capi_uq";
    fs::remove_all(base);
    const char* uq_cfg =
        "{\"images\": 6, \"H\": 16, \"epochs\": 20, \"hidden\": 8, \"seed\": 2}";
    const fs::path head = base / "head";
    REQUIRE(gmssl_train_uq(ctx.p, uq_cfg, head.c_str()) == 0);
    CHECK(fs::exists(head / "train_log.json"));

    char* out = nullptr;
    const fs::path report = base / "ood.json";
    const char* grid = "{\"images_per_level\": 2, \"H\": 16}";
    REQUIRE(gmssl_eval_ood(ctx.p, head.c_str(), grid, 5, report.c_str(), &out) == 0);
    REQUIRE(out != nullptr);
    const std::string text(out);
    gmssl_string_free(out);
    CHECK(text.find("levels") != std::string::npos);
    CHECK(fs::exists(report));
    CHECK(fs::exists(base / "ood.csv"));

    CHECK(gmssl_train_uq(ctx.p, "{\"patch\": 4}", (base / "bad").c_str()) == 2);
    CHECK(std::string(gmssl_last_error(ctx.p)).find("patch") != std::string::npos);
}
