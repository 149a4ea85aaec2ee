#pragma once

#include <string>
#include <vector>

#include "gm/trainer.hpp"
#include "gm/uncertainty.hpp"

namespace gm {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// JSON -> TrainConfig. Unknown keys are rejected with the offending key path;
/// missing keys fall back to the documented defaults.
TrainConfig parse_train_config(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& cfg);

UQTrainConfig parse_uq_config(const std::string& json_text);

/// {"levels": [{noise_sigma, contrast_gain, blur_radius}, ...]}; empty or
/// missing file -> default_shift_grid().
std::vector<ShiftSpec> parse_shift_grid(const std::string& json_text);

struct OodEvalCfg {
    std::vector<ShiftSpec> levels;
    std::size_t images_per_level = 8;
    std::size_t H = 32;
};

/// Shift grid plus evaluation-set size keys images_per_level and H.
OodEvalCfg parse_ood_grid(const std::string& json_text);

/// Cartesian sweep grid: axes over {N, k, lambda, alpha, gamma} plus shared
/// "steps", "seed" and a "base" TrainConfig override block.
std::vector<SweepCell> parse_sweep_grid(const std::string& json_text);

/// FNV-1a hash of the default-config JSON, hex; printed by --version.
std::string config_schema_hash();

std::string read_text_file(const std::string& path);

}  // namespace gm
