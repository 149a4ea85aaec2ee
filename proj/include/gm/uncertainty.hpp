#pragma once

#include <string>
#include <vector>

#include "gm/rng.hpp"
#include "gm/tensor.hpp"

namespace gm {

/// Scale^2 * Gamma(3/shape) / Gamma(1/shape) — the GGD variance.
double ggd_uncertainty(double scale, double shape);

/// Per-pixel probabilistic head: a shared hidden layer over the concatenated
/// p x p input and prediction patches, with mu / log-scale / shape branches.
struct UQHead {
    std::size_t patch = 5;
    std::size_t hidden = 32;
    bool ggd_mode = false;  // shape fixed at 2 unless set
    Tensor W1, b1;          // hidden x (2 p^2), hidden
    Tensor Wmu, bmu;        // 1 x hidden, 1
    Tensor Wa, ba;          // log-scale branch
    Tensor Wb, bb;          // shape branch (GGD mode only)

    static UQHead init(RngStream& rng, std::size_t patch, std::size_t hidden,
                       bool ggd_mode);
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> tensor_names() const;
};

struct UQOutput {
    Tensor mu;           // H x W
    Tensor scale;        // H x W, > 0
    Tensor shape;        // H x W, > 0
    Tensor uncertainty;  // H x W, GGD variance per pixel
};

struct UQForwardCtx {
    Tensor features;   // (H*W) x (2 p^2) patch rows
    Tensor hidden;     // (H*W) x hidden post-ReLU
    Tensor shape_sig;  // GGD mode: d(shape)/d(raw) = sigmoid(raw) per pixel
};

UQOutput uq_forward(const Tensor& x, const Tensor& yhat, const UQHead& head,
                    UQForwardCtx* ctx = nullptr);

struct UQLossResult {
    double loss = 0.0;
    Tensor dmu;      // dL/dmu per pixel
    Tensor dlog_a;   // dL/d(log scale) per pixel
    Tensor dshape;   // dL/d(shape) per pixel, GGD mode only (else empty)
    std::size_t clamped = 0;  // pixels where sigma^2 hit the 1e-8 floor
};

/// Gaussian NLL plus lam_rec * reconstruction penalty (Gaussian mode:
/// shape == 2, sigma^2 = scale^2 / 2).
UQLossResult uq_loss(const UQOutput& out, const Tensor& y, const Tensor& yhat,
                     double lam_rec);

/// Free-shape GGD NLL with its normalizer, same reconstruction penalty.
UQLossResult uq_loss_ggd(const UQOutput& out, const Tensor& y, const Tensor& yhat,
                         double lam_rec);

/// 256-bin between-class-variance threshold; all-equal input returns the
/// common value.
double otsu_threshold(std::span<const float> values);

/// Fraction of pixels strictly above the map's Otsu threshold.
double uncertain_area(const Tensor& unc_map);

/// 2|A n B| / (|A| + |B|); both empty -> 1.
double dice_score(const Tensor& pred, const Tensor& gt);

double pearson_corr(std::span<const double> xs, std::span<const double> ys);

// ---- synthetic OOD harness ----

struct ShiftSpec {
    double noise_sigma = 0.0;
    double contrast_gain = 1.0;
    double blur_radius = 0.0;
};

/// Blob image: smooth random field scaled to [0,1]; gt = field > 0.55.
struct BlobSample {
    Tensor x;   // H x W image
    Tensor gt;  // H x W binary mask
};

BlobSample gen_blob_sample(RngStream& rng, std::size_t H);

Tensor apply_shift(const Tensor& x, const ShiftSpec& shift, RngStream& rng);

/// Frozen predictor: box-smooth twice, threshold at 0.55.
Tensor frozen_predictor(const Tensor& x);

struct UQTrainConfig {
    std::size_t images = 24;
    std::size_t H = 32;
    std::size_t epochs = 120;
    std::size_t patch = 5;
    std::size_t hidden = 32;
    double lr = 5e-3;
    double lam_rec = 2.0;
    double source_noise_max = 0.5;  // source-domain noise range [0, max]
    std::uint64_t seed = 1;
    bool ggd_mode = false;
};

struct UQTrainResult {
    UQHead head;
    std::vector<double> epoch_loss;
};

/// Adam on uq_loss over (x, yhat = frozen_predictor(x), y) triples; the
/// predictor is never updated.
UQTrainResult train_uq(const UQTrainConfig& cfg);

struct OodLevelReport {
    ShiftSpec shift;
    double mean_uncertain_area = 0.0;
    double mean_dice = 0.0;
};

struct OodReport {
    std::vector<OodLevelReport> levels;
    double pearson_area_vs_dice = 0.0;
    double mse_area_vs_error = 0.0;  // uncertain_area vs (1 - Dice)

    std::string to_json() const;
    std::string to_csv() const;
};

OodReport eval_ood(const UQHead& head, const std::vector<ShiftSpec>& grid,
                   std::size_t images_per_level, std::size_t H,
                   std::uint64_t seed);

std::vector<ShiftSpec> default_shift_grid();

void save_uq_head(const std::string& dir, const UQHead& head);
UQHead load_uq_head(const std::string& dir);

}  // namespace gm
