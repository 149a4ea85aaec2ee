#pragma once

#include <string>

#include "gm/rng.hpp"
#include "gm/tensor.hpp"

namespace gm {

/// Latent feature field on a G x G grid over the unit square.
struct BaseScene {
    Tensor field;  // D x G x G
};

struct ViewTransform {
    double x0 = 0.0, y0 = 0.0, w = 1.0, h = 1.0;  // crop in unit-square coords
    bool hflip = false;
    double noise_sigma = 0.0;
};

/// Per-view feature maps y (N x D x R x S) and pre-transform unit-square
/// coordinates pos (N x R x S x 2).
struct ViewBatch {
    Tensor y;
    Tensor pos;
};

struct BatchCfg {
    std::size_t D = 8;
    std::size_t G = 32;
    std::size_t R = 7;
    std::size_t S = 7;
    double noise_sigma = 0.005;
    double min_overlap = 0.04;  // crop intersection area lower bound
    // Lower bound on sampled crop width/height. Large default crops keep the
    // paired views' pooled statistics close enough that the kNN graphs of the
    // two views mostly agree, which the matching objective needs to identify
    // the ground-truth correspondence.
    double crop_min = 0.98;
};

/// Smooth random field: i.i.d. Gaussian grid box-blurred (3x3) twice.
BaseScene gen_scene(RngStream& rng, std::size_t D, std::size_t G);

/// Sample an R x S lattice of the crop; pos holds original coordinates.
void apply_view(const BaseScene& scene, const ViewTransform& tf, std::size_t R,
                std::size_t S, RngStream& rng, std::size_t item,
                ViewBatch& out);

ViewTransform random_transform(RngStream& rng, double crop_min = 0.25);

double crop_overlap_area(const ViewTransform& a, const ViewTransform& b);

/// N scenes, two random intersecting views each; item i of both views shares
/// a scene, so the ground-truth correspondence is the identity.
void make_batch(RngStream& rng, std::size_t N, const BatchCfg& cfg, ViewBatch& xs,
                ViewBatch& xt);

/// Batch directory layout used by gen-data and --dataset: ys.gmt, pos_s.gmt,
/// yt.gmt, pos_t.gmt + manifest.json.
void save_batch_dir(const std::string& dir, const ViewBatch& xs, const ViewBatch& xt,
                    const BatchCfg& cfg, std::uint64_t seed);
void load_batch_dir(const std::string& dir, ViewBatch& xs, ViewBatch& xt);

}  // namespace gm
