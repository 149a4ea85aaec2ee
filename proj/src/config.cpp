#include "gm/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "gm/mathkit.hpp"

namespace gm {

using nlohmann::json;

namespace {

json parse_json(const std::string& text) {
    try {
        return json::parse(text.empty() ? "{}" : text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& scope) {
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown config key \"" + scope + key + "\"");
        }
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config key \"") + key +
                              "\" has the wrong type");
        }
    }
}

void apply_train_overrides(const json& j, TrainConfig& cfg) {
    reject_unknown(j, {"N", "k", "lambda", "alpha", "gamma", "F", "lr", "beta1",
                       "beta2", "adam_eps", "steps", "seed", "clip_norm", "solver",
                       "data", "zero_noise"},
                   "");
    read_field(j, "N", cfg.N);
    read_field(j, "k", cfg.k);
    read_field(j, "lambda", cfg.lambda);
    read_field(j, "alpha", cfg.alpha);
    read_field(j, "gamma", cfg.gamma);
    read_field(j, "F", cfg.F);
    read_field(j, "lr", cfg.lr);
    read_field(j, "beta1", cfg.beta1);
    read_field(j, "beta2", cfg.beta2);
    read_field(j, "adam_eps", cfg.adam_eps);
    read_field(j, "steps", cfg.steps);
    read_field(j, "seed", cfg.seed);
    read_field(j, "clip_norm", cfg.clip_norm);
    read_field(j, "zero_noise", cfg.zero_noise);
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        reject_unknown(s, {"exact_threshold", "restarts", "max_sweeps"}, "solver.");
        read_field(s, "exact_threshold", cfg.solver.exact_threshold);
        read_field(s, "restarts", cfg.solver.restarts);
        read_field(s, "max_sweeps", cfg.solver.max_sweeps);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, {"D", "G", "R", "S", "noise_sigma", "min_overlap", "crop_min"},
                       "data.");
        read_field(d, "D", cfg.data.D);
        read_field(d, "G", cfg.data.G);
        read_field(d, "R", cfg.data.R);
        read_field(d, "S", cfg.data.S);
        read_field(d, "noise_sigma", cfg.data.noise_sigma);
        read_field(d, "min_overlap", cfg.data.min_overlap);
        read_field(d, "crop_min", cfg.data.crop_min);
    }
    try {
        cfg.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    TrainConfig cfg;
    apply_train_overrides(parse_json(json_text), cfg);
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["N"] = cfg.N;
    j["k"] = cfg.k;
    j["lambda"] = cfg.lambda;
    j["alpha"] = cfg.alpha;
    j["gamma"] = cfg.gamma;
    j["F"] = cfg.F;
    j["lr"] = cfg.lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["steps"] = cfg.steps;
    j["seed"] = cfg.seed;
    j["clip_norm"] = cfg.clip_norm;
    j["zero_noise"] = cfg.zero_noise;
    j["solver"] = {{"exact_threshold", cfg.solver.exact_threshold},
                   {"restarts", cfg.solver.restarts},
                   {"max_sweeps", cfg.solver.max_sweeps}};
    j["data"] = {{"D", cfg.data.D},
                 {"G", cfg.data.G},
                 {"R", cfg.data.R},
                 {"S", cfg.data.S},
                 {"noise_sigma", cfg.data.noise_sigma},
                 {"min_overlap", cfg.data.min_overlap},
                 {"crop_min", cfg.data.crop_min}};
    return j.dump(2) + "\n";
}

UQTrainConfig parse_uq_config(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"images", "H", "epochs", "patch", "hidden", "lr", "lam_rec",
                       "source_noise_max", "seed", "ggd_mode"},
                   "");
    UQTrainConfig cfg;
    read_field(j, "images", cfg.images);
    read_field(j, "H", cfg.H);
    read_field(j, "epochs", cfg.epochs);
    read_field(j, "patch", cfg.patch);
    read_field(j, "hidden", cfg.hidden);
    read_field(j, "lr", cfg.lr);
    read_field(j, "lam_rec", cfg.lam_rec);
    read_field(j, "source_noise_max", cfg.source_noise_max);
    read_field(j, "seed", cfg.seed);
    read_field(j, "ggd_mode", cfg.ggd_mode);
    if (cfg.images < 1 || cfg.H < 8) throw ConfigError("images >= 1 and H >= 8 required");
    if (cfg.patch % 2 == 0) throw ConfigError("patch must be odd");
    if (cfg.lam_rec < 0.0) throw ConfigError("lam_rec must be >= 0");
    return cfg;
}

std::vector<ShiftSpec> parse_shift_grid(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"levels"}, "");
    if (!j.contains("levels")) return default_shift_grid();
    std::vector<ShiftSpec> grid;
    for (const json& l : j.at("levels")) {
        reject_unknown(l, {"noise_sigma", "contrast_gain", "blur_radius"},
                       "levels[].");
        ShiftSpec s;
        read_field(l, "noise_sigma", s.noise_sigma);
        read_field(l, "contrast_gain", s.contrast_gain);
        read_field(l, "blur_radius", s.blur_radius);
        if (s.noise_sigma < 0 || s.contrast_gain < 0 || s.blur_radius < 0) {
            throw ConfigError("shift parameters must be >= 0");
        }
        grid.push_back(s);
    }
    if (grid.empty()) throw ConfigError("shift grid has no levels");
    return grid;
}

OodEvalCfg parse_ood_grid(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"levels", "images_per_level", "H"}, "");
    OodEvalCfg cfg;
    read_field(j, "images_per_level", cfg.images_per_level);
    read_field(j, "H", cfg.H);
    if (cfg.images_per_level < 1 || cfg.H < 8) {
        throw ConfigError("images_per_level >= 1 and H >= 8 required");
    }
    json levels_only;
    if (j.contains("levels")) levels_only["levels"] = j.at("levels");
    cfg.levels = parse_shift_grid(levels_only.is_null() ? "{}" : levels_only.dump());
    return cfg;
}

std::vector<SweepCell> parse_sweep_grid(const std::string& json_text) {
    const json j = parse_json(json_text);
    reject_unknown(j, {"N", "k", "lambda", "alpha", "gamma", "steps", "seed", "base"},
                   "");
    TrainConfig base;
    if (j.contains("base")) apply_train_overrides(j.at("base"), base);
    base.steps = 30;  // reduced-steps default for sweep cells
    read_field(j, "steps", base.steps);
    read_field(j, "seed", base.seed);

    auto axis = [&](const char* key, std::vector<double> fallback) {
        std::vector<double> vals = std::move(fallback);
        if (j.contains(key)) vals = j.at(key).get<std::vector<double>>();
        if (vals.empty()) throw ConfigError(std::string("axis \"") + key + "\" is empty");
        return vals;
    };
    const auto ns = axis("N", {8, 16, 32});
    const auto ks = axis("k", {static_cast<double>(base.k)});
    const auto lambdas = axis("lambda", {base.lambda});
    const auto alphas = axis("alpha", {0.7, 0.8, 0.9});
    const auto gammas = axis("gamma", {static_cast<double>(base.gamma)});

    std::vector<SweepCell> cells;
    char label[128];
    for (double n : ns) {
        for (double k : ks) {
            for (double lam : lambdas) {
                for (double alpha : alphas) {
                    for (double gamma : gammas) {
                        SweepCell cell;
                        cell.cfg = base;
                        cell.cfg.N = static_cast<std::size_t>(n);
                        cell.cfg.k = std::min(static_cast<std::size_t>(k),
                                              cell.cfg.N - 1);
                        cell.cfg.lambda = lam;
                        cell.cfg.alpha = alpha;
                        cell.cfg.gamma = static_cast<std::size_t>(gamma);
                        try {
                            cell.cfg.validate();
                        } catch (const DomainError& e) {
                            throw ConfigError(e.what());
                        }
                        std::snprintf(label, sizeof(label),
                                      "N%zu_k%zu_l%g_a%g_g%zu", cell.cfg.N,
                                      cell.cfg.k, lam, alpha, cell.cfg.gamma);
                        cell.label = label;
                        cells.push_back(std::move(cell));
                    }
                }
            }
        }
    }
    return cells;
}

std::string config_schema_hash() {
    const std::string canon = train_config_to_json(TrainConfig{});
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open file " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace gm
