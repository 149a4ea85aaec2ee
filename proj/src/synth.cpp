#include "gm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gm/mathkit.hpp"

namespace gm {

namespace {

Tensor box_blur_3x3(const Tensor& f) {
    const std::size_t D = f.extent(0), G = f.extent(1);
    Tensor out(f.shape());
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t y = 0; y < G; ++y) {
            for (std::size_t x = 0; x < G; ++x) {
                double acc = 0.0;
                int cnt = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = static_cast<int>(y) + dy;
                        const int xx = static_cast<int>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<int>(G) ||
                            xx >= static_cast<int>(G)) {
                            continue;
                        }
                        acc += f.at3(d, static_cast<std::size_t>(yy),
                                     static_cast<std::size_t>(xx));
                        ++cnt;
                    }
                }
                out.at3(d, y, x) = static_cast<float>(acc / cnt);
            }
        }
    }
    return out;
}

double bilinear(const Tensor& field, std::size_t d, double px, double py) {
    const std::size_t G = field.extent(1);
    const double fx = px * static_cast<double>(G - 1);
    const double fy = py * static_cast<double>(G - 1);
    const std::size_t x0 = std::min(static_cast<std::size_t>(fx), G - 2);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), G - 2);
    const double tx = fx - static_cast<double>(x0);
    const double ty = fy - static_cast<double>(y0);
    const double a = field.at3(d, y0, x0);
    const double b = field.at3(d, y0, x0 + 1);
    const double c = field.at3(d, y0 + 1, x0);
    const double e = field.at3(d, y0 + 1, x0 + 1);
    return a * (1 - tx) * (1 - ty) + b * tx * (1 - ty) + c * (1 - tx) * ty +
           e * tx * ty;
}

}  // namespace

BaseScene gen_scene(RngStream& rng, std::size_t D, std::size_t G) {
    if (D < 1 || G < 4) throw DomainError("gen_scene requires D >= 1, G >= 4");
    Tensor field({D, G, G});
    for (std::size_t i = 0; i < field.numel(); ++i) {
        field[i] = static_cast<float>(rng.next_gaussian());
    }
    field = box_blur_3x3(field);
    field = box_blur_3x3(field);
    return {std::move(field)};
}

void apply_view(const BaseScene& scene, const ViewTransform& tf, std::size_t R,
                std::size_t S, RngStream& rng, std::size_t item, ViewBatch& out) {
    const std::size_t D = scene.field.extent(0);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t s = 0; s < S; ++s) {
            // lattice over the crop; hflip reverses the horizontal axis
            const std::size_t sc = tf.hflip ? (S - 1 - s) : s;
            const double u = (S > 1) ? static_cast<double>(sc) / (S - 1) : 0.5;
            const double v = (R > 1) ? static_cast<double>(r) / (R - 1) : 0.5;
            const double px = tf.x0 + tf.w * u;
            const double py = tf.y0 + tf.h * v;
            out.pos.at4(item, r, s, 0) = static_cast<float>(px);
            out.pos.at4(item, r, s, 1) = static_cast<float>(py);
            for (std::size_t d = 0; d < D; ++d) {
                double val = bilinear(scene.field, d, px, py);
                if (tf.noise_sigma > 0.0) {
                    val += tf.noise_sigma * rng.next_gaussian();
                }
                out.y.at4(item, d, r, s) = static_cast<float>(val);
            }
        }
    }
}

ViewTransform random_transform(RngStream& rng, double crop_min) {
    if (crop_min < 0.25 || crop_min > 1.0) {
        throw DomainError("crop_min must lie in [0.25, 1]");
    }
    ViewTransform tf;
    tf.w = rng.next_uniform(crop_min, 1.0);
    tf.h = rng.next_uniform(crop_min, 1.0);
    tf.x0 = rng.next_uniform(0.0, 1.0 - tf.w);
    tf.y0 = rng.next_uniform(0.0, 1.0 - tf.h);
    tf.hflip = (rng.next_u64() & 1) != 0;
    return tf;
}

double crop_overlap_area(const ViewTransform& a, const ViewTransform& b) {
    const double w = std::min(a.x0 + a.w, b.x0 + b.w) - std::max(a.x0, b.x0);
    const double h = std::min(a.y0 + a.h, b.y0 + b.h) - std::max(a.y0, b.y0);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

void make_batch(RngStream& rng, std::size_t N, const BatchCfg& cfg, ViewBatch& xs,
                ViewBatch& xt) {
    if (N < 2) throw DomainError("make_batch requires N >= 2");
    xs.y = Tensor({N, cfg.D, cfg.R, cfg.S});
    xs.pos = Tensor({N, cfg.R, cfg.S, 2});
    xt.y = Tensor({N, cfg.D, cfg.R, cfg.S});
    xt.pos = Tensor({N, cfg.R, cfg.S, 2});
    for (std::size_t i = 0; i < N; ++i) {
        RngStream item_rng = rng.split(i);
        BaseScene scene = gen_scene(item_rng, cfg.D, cfg.G);
        ViewTransform ts, tt;
        do {
            ts = random_transform(item_rng, cfg.crop_min);
            tt = random_transform(item_rng, cfg.crop_min);
        } while (crop_overlap_area(ts, tt) < cfg.min_overlap);
        ts.noise_sigma = cfg.noise_sigma;
        tt.noise_sigma = cfg.noise_sigma;
        apply_view(scene, ts, cfg.R, cfg.S, item_rng, i, xs);
        apply_view(scene, tt, cfg.R, cfg.S, item_rng, i, xt);
    }
}

void save_batch_dir(const std::string& dir, const ViewBatch& xs, const ViewBatch& xt,
                    const BatchCfg& cfg, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_tensor(dir + "/ys.gmt", xs.y);
    save_tensor(dir + "/pos_s.gmt", xs.pos);
    save_tensor(dir + "/yt.gmt", xt.y);
    save_tensor(dir + "/pos_t.gmt", xt.pos);
    nlohmann::json manifest;
    manifest["N"] = xs.y.extent(0);
    manifest["D"] = cfg.D;
    manifest["R"] = cfg.R;
    manifest["S"] = cfg.S;
    manifest["seed"] = seed;
    manifest["cfg"] = {{"G", cfg.G},
                       {"noise_sigma", cfg.noise_sigma},
                       {"min_overlap", cfg.min_overlap},
                       {"crop_min", cfg.crop_min}};
    atomic_write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
}

void load_batch_dir(const std::string& dir, ViewBatch& xs, ViewBatch& xt) {
    xs.y = load_tensor(dir + "/ys.gmt");
    xs.pos = load_tensor(dir + "/pos_s.gmt");
    xt.y = load_tensor(dir + "/yt.gmt");
    xt.pos = load_tensor(dir + "/pos_t.gmt");
    if (xs.y.rank() != 4 || xs.pos.rank() != 4 || !xs.y.same_shape(xt.y) ||
        !xs.pos.same_shape(xt.pos) || xs.y.extent(0) != xs.pos.extent(0)) {
        throw TensorError("batch directory " + dir + " has inconsistent shapes");
    }
}

}  // namespace gm
