#include "gm/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gm/mathkit.hpp"

namespace gm {

double ggd_uncertainty(double scale, double shape) {
    return scale * scale * gamma_fn(3.0 / shape) / gamma_fn(1.0 / shape);
}

UQHead UQHead::init(RngStream& rng, std::size_t patch, std::size_t hidden,
                    bool ggd_mode) {
    UQHead h;
    h.patch = patch;
    h.hidden = hidden;
    h.ggd_mode = ggd_mode;
    const std::size_t in = 2 * patch * patch;
    auto randn = [&rng](Tensor& t, double scale) {
        for (float& v : t.span()) v = static_cast<float>(scale * rng.next_gaussian());
    };
    h.W1 = Tensor({hidden, in});
    randn(h.W1, std::sqrt(2.0 / static_cast<double>(in)));
    h.b1 = Tensor({hidden});
    // output branches start at zero so every run begins from the same
    // prediction (mu = 0, scale = 1); only the hidden layer breaks symmetry
    h.Wmu = Tensor({1, hidden});
    h.bmu = Tensor({1});
    h.Wa = Tensor({1, hidden});
    h.ba = Tensor({1});
    h.Wb = Tensor({1, hidden});
    h.bb = Tensor({1});
    return h;
}

std::vector<Tensor*> UQHead::tensors() {
    return {&W1, &b1, &Wmu, &bmu, &Wa, &ba, &Wb, &bb};
}

std::vector<const Tensor*> UQHead::tensors() const {
    return {&W1, &b1, &Wmu, &bmu, &Wa, &ba, &Wb, &bb};
}

std::vector<std::string> UQHead::tensor_names() const {
    return {"W1", "b1", "Wmu", "bmu", "Wa", "ba", "Wb", "bb"};
}

namespace {

// replication-padded p x p patches of x and yhat, one row per pixel
Tensor patch_features(const Tensor& x, const Tensor& yhat, std::size_t patch) {
    const std::size_t H = x.extent(0), W = x.extent(1);
    const std::size_t pp = patch * patch;
    const int half = static_cast<int>(patch) / 2;
    Tensor feat({H * W, 2 * pp});
    for (std::size_t py = 0; py < H; ++py) {
        for (std::size_t px = 0; px < W; ++px) {
            float* row = feat.data() + (py * W + px) * 2 * pp;
            std::size_t c = 0;
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx, ++c) {
                    const std::size_t yy = static_cast<std::size_t>(std::clamp(
                        static_cast<int>(py) + dy, 0, static_cast<int>(H) - 1));
                    const std::size_t xx = static_cast<std::size_t>(std::clamp(
                        static_cast<int>(px) + dx, 0, static_cast<int>(W) - 1));
                    row[c] = x.at2(yy, xx);
                    row[pp + c] = yhat.at2(yy, xx);
                }
            }
        }
    }
    return feat;
}

double branch_out(const UQHead& h, const Tensor& hidden, std::size_t row,
                  const Tensor& W, const Tensor& b) {
    double acc = b[0];
    for (std::size_t c = 0; c < h.hidden; ++c) {
        acc += static_cast<double>(W[c]) * hidden.at2(row, c);
    }
    return acc;
}

}  // namespace

UQOutput uq_forward(const Tensor& x, const Tensor& yhat, const UQHead& head,
                    UQForwardCtx* ctx) {
    if (!x.same_shape(yhat)) throw DomainError("uq_forward: x and yhat shapes differ");
    const std::size_t H = x.extent(0), W = x.extent(1);
    const std::size_t in = 2 * head.patch * head.patch;
    Tensor feat = patch_features(x, yhat, head.patch);
    Tensor hidden({H * W, head.hidden});
    for (std::size_t r = 0; r < H * W; ++r) {
        for (std::size_t o = 0; o < head.hidden; ++o) {
            double acc = head.b1[o];
            const float* wrow = head.W1.data() + o * in;
            const float* frow = feat.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) acc += static_cast<double>(wrow[c]) * frow[c];
            hidden.at2(r, o) = acc > 0.0 ? static_cast<float>(acc) : 0.0f;
        }
    }
    UQOutput out;
    out.mu = Tensor({H, W});
    out.scale = Tensor({H, W});
    out.shape = Tensor({H, W});
    out.uncertainty = Tensor({H, W});
    for (std::size_t r = 0; r < H * W; ++r) {
        const double mu = branch_out(head, hidden, r, head.Wmu, head.bmu);
        const double log_a = branch_out(head, hidden, r, head.Wa, head.ba);
        const double scale = std::exp(std::clamp(log_a, -15.0, 15.0));
        double shape = 2.0;
        if (head.ggd_mode) {
            const double raw =
                std::clamp(branch_out(head, hidden, r, head.Wb, head.bb), -30.0, 30.0);
            shape = std::log1p(std::exp(raw)) + 0.1;  // softplus keeps shape > 0
            if (ctx) {
                if (ctx->shape_sig.numel() == 0) ctx->shape_sig = Tensor({H, W});
                ctx->shape_sig[r] = static_cast<float>(1.0 / (1.0 + std::exp(-raw)));
            }
        }
        if (!std::isfinite(mu) || !std::isfinite(scale)) {
            throw NumericError("uq_forward: non-finite activation at pixel " +
                               std::to_string(r / W) + "," + std::to_string(r % W));
        }
        out.mu[r] = static_cast<float>(mu);
        out.scale[r] = static_cast<float>(scale);
        out.shape[r] = static_cast<float>(shape);
        out.uncertainty[r] = static_cast<float>(ggd_uncertainty(scale, shape));
    }
    if (ctx) {
        ctx->features = std::move(feat);
        ctx->hidden = std::move(hidden);
    }
    return out;
}

UQLossResult uq_loss(const UQOutput& out, const Tensor& y, const Tensor& yhat,
                     double lam_rec) {
    if (!out.mu.same_shape(y) || !y.same_shape(yhat)) {
        throw DomainError("uq_loss: shape mismatch");
    }
    if (lam_rec < 0.0) throw DomainError("uq_loss requires lam_rec >= 0");
    UQLossResult res;
    res.dmu = Tensor(out.mu.shape());
    res.dlog_a = Tensor(out.mu.shape());
    double loss = 0.0;
    for (std::size_t p = 0; p < y.numel(); ++p) {
        const double mu = out.mu[p];
        double var = 0.5 * static_cast<double>(out.scale[p]) * out.scale[p];
        bool clamped = false;
        if (var < 1e-8) {
            var = 1e-8;
            clamped = true;
            ++res.clamped;
        }
        const double resid = y[p] - mu;
        loss += resid * resid / (2.0 * var) + 0.5 * std::log(var) +
                lam_rec * (mu - yhat[p]) * (mu - yhat[p]);
        res.dmu[p] = static_cast<float>(-resid / var + 2.0 * lam_rec * (mu - yhat[p]));
        if (!clamped) {
            // d/dvar = -resid^2/(2 var^2) + 1/(2 var); dvar/dlog_a = 2 var
            const double dvar = -resid * resid / (2.0 * var * var) + 0.5 / var;
            res.dlog_a[p] = static_cast<float>(dvar * 2.0 * var);
        }
    }
    res.loss = loss;
    return res;
}

UQLossResult uq_loss_ggd(const UQOutput& out, const Tensor& y, const Tensor& yhat,
                         double lam_rec) {
    if (!out.mu.same_shape(y) || !y.same_shape(yhat)) {
        throw DomainError("uq_loss_ggd: shape mismatch");
    }
    if (lam_rec < 0.0) throw DomainError("uq_loss_ggd requires lam_rec >= 0");
    UQLossResult res;
    res.dmu = Tensor(out.mu.shape());
    res.dlog_a = Tensor(out.mu.shape());
    res.dshape = Tensor(out.mu.shape());
    double loss = 0.0;
    // -log GGD(y; mu, a, b) = (|r|/a)^b + log(2 a Gamma(1/b) / b)
    for (std::size_t p = 0; p < y.numel(); ++p) {
        const double mu = out.mu[p];
        const double a = std::max(static_cast<double>(out.scale[p]), 1e-8);
        const double b = out.shape[p];
        const double r = static_cast<double>(y[p]) - mu;
        const double absr = std::max(std::abs(r), 1e-12);
        const double ratio = absr / a;
        const double pw = std::pow(ratio, b);
        loss += pw + std::log(2.0 * a) + std::lgamma(1.0 / b) - std::log(b) +
                lam_rec * (mu - yhat[p]) * (mu - yhat[p]);
        const double sign_r = r >= 0.0 ? 1.0 : -1.0;
        res.dmu[p] = static_cast<float>(-b * pw / absr * sign_r +
                                        2.0 * lam_rec * (mu - yhat[p]));
        res.dlog_a[p] = static_cast<float>(1.0 - b * pw);
        res.dshape[p] = static_cast<float>(pw * std::log(ratio) -
                                           digamma(1.0 / b) / (b * b) - 1.0 / b);
    }
    res.loss = loss;
    return res;
}

double otsu_threshold(std::span<const float> values) {
    if (values.size() < 2) throw DomainError("otsu_threshold needs >= 2 values");
    float lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return lo;
    constexpr int kBins = 256;
    const double w = (static_cast<double>(hi) - lo) / kBins;
    std::vector<std::size_t> hist(kBins, 0);
    for (float v : values) {
        int b = static_cast<int>((static_cast<double>(v) - lo) / w);
        b = std::clamp(b, 0, kBins - 1);
        ++hist[static_cast<std::size_t>(b)];
    }
    const double total = static_cast<double>(values.size());
    // cumulative moments with bin centers
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) {
        sum_all += hist[static_cast<std::size_t>(b)] * (lo + (b + 0.5) * w);
    }
    double best_var = -1.0;
    int best_t = 0;
    double n0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < kBins - 1; ++t) {
        n0 += hist[static_cast<std::size_t>(t)];
        sum0 += hist[static_cast<std::size_t>(t)] * (lo + (t + 0.5) * w);
        const double n1 = total - n0;
        if (n0 == 0.0 || n1 == 0.0) continue;
        const double m0 = sum0 / n0;
        const double m1 = (sum_all - sum0) / n1;
        const double between = (n0 / total) * (n1 / total) * (m0 - m1) * (m0 - m1);
        if (between > best_var) {  // ties keep the lower threshold
            best_var = between;
            best_t = t;
        }
    }
    return lo + (best_t + 1) * w;
}

double uncertain_area(const Tensor& unc_map) {
    const double thr = otsu_threshold(unc_map.span());
    std::size_t above = 0;
    for (float v : unc_map.span()) {
        if (static_cast<double>(v) > thr) ++above;
    }
    return static_cast<double>(above) / static_cast<double>(unc_map.numel());
}

double dice_score(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw DomainError("dice_score: shape mismatch");
    std::size_t np = 0, ng = 0, both = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] > 0.5f;
        const bool g = gt[i] > 0.5f;
        np += p;
        ng += g;
        both += p && g;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

double pearson_corr(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 3) {
        throw DomainError("pearson_corr needs equal-length series, length >= 3");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double cxy = 0.0, cxx = 0.0, cyy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cxy += (xs[i] - mx) * (ys[i] - my);
        cxx += (xs[i] - mx) * (xs[i] - mx);
        cyy += (ys[i] - my) * (ys[i] - my);
    }
    if (cxx == 0.0 || cyy == 0.0) {
        throw DomainError("pearson_corr undefined: zero variance input");
    }
    return cxy / std::sqrt(cxx * cyy);
}

// ---- synthetic harness ----

namespace {

Tensor box_smooth(const Tensor& x) {
    const std::size_t H = x.extent(0), W = x.extent(1);
    Tensor out({H, W});
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) {
            double acc = 0.0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = static_cast<int>(y) + dy;
                    const int xc = static_cast<int>(xx) + dx;
                    if (yy < 0 || xc < 0 || yy >= static_cast<int>(H) ||
                        xc >= static_cast<int>(W)) {
                        continue;
                    }
                    acc += x.at2(static_cast<std::size_t>(yy),
                                 static_cast<std::size_t>(xc));
                    ++cnt;
                }
            }
            out.at2(y, xx) = static_cast<float>(acc / cnt);
        }
    }
    return out;
}

constexpr double kSegThreshold = 0.55;

}  // namespace

BlobSample gen_blob_sample(RngStream& rng, std::size_t H) {
    Tensor field({H, H});
    for (float& v : field.span()) v = static_cast<float>(rng.next_gaussian());
    field = box_smooth(box_smooth(box_smooth(field)));
    float lo = field[0], hi = field[0];
    for (float v : field.span()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = std::max(hi - lo, 1e-6f);
    for (float& v : field.span()) v = (v - lo) / range;
    BlobSample s;
    s.x = field;
    s.gt = Tensor({H, H});
    for (std::size_t i = 0; i < field.numel(); ++i) {
        s.gt[i] = field[i] > kSegThreshold ? 1.0f : 0.0f;
    }
    return s;
}

Tensor apply_shift(const Tensor& x, const ShiftSpec& shift, RngStream& rng) {
    Tensor out = x;
    if (shift.contrast_gain != 1.0) {
        for (float& v : out.span()) {
            v = static_cast<float>(shift.contrast_gain * (v - 0.5) + 0.5);
        }
    }
    const int passes = static_cast<int>(std::lround(shift.blur_radius));
    for (int i = 0; i < passes; ++i) out = box_smooth(out);
    if (shift.noise_sigma > 0.0) {
        for (float& v : out.span()) {
            v = static_cast<float>(v + shift.noise_sigma * rng.next_gaussian());
        }
    }
    return out;
}

Tensor frozen_predictor(const Tensor& x) {
    Tensor s = box_smooth(box_smooth(x));
    Tensor pred(x.shape());
    for (std::size_t i = 0; i < s.numel(); ++i) {
        pred[i] = s[i] > kSegThreshold ? 1.0f : 0.0f;
    }
    return pred;
}

namespace {

struct HeadGrads {
    Tensor W1, b1, Wmu, bmu, Wa, ba, Wb, bb;
};

HeadGrads head_grads_zero(const UQHead& h) {
    return {Tensor(h.W1.shape()), Tensor(h.b1.shape()), Tensor(h.Wmu.shape()),
            Tensor(h.bmu.shape()), Tensor(h.Wa.shape()), Tensor(h.ba.shape()),
            Tensor(h.Wb.shape()),  Tensor(h.bb.shape())};
}

void head_backward(const UQHead& h, const UQForwardCtx& ctx, const UQOutput& out,
                   const UQLossResult& lr, HeadGrads& g) {
    const std::size_t rows = ctx.hidden.extent(0);
    const std::size_t in = 2 * h.patch * h.patch;
    const bool ggd = lr.dshape.numel() != 0;
    std::vector<double> dh(h.hidden);
    for (std::size_t r = 0; r < rows; ++r) {
        const double dmu = lr.dmu[r];
        const double dla = lr.dlog_a[r];
        const double draw = ggd ? lr.dshape[r] * ctx.shape_sig[r] : 0.0;
        if (dmu == 0.0 && dla == 0.0 && draw == 0.0) continue;
        g.bmu[0] += static_cast<float>(dmu);
        g.ba[0] += static_cast<float>(dla);
        if (ggd) g.bb[0] += static_cast<float>(draw);
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t c = 0; c < h.hidden; ++c) {
            const double hv = ctx.hidden.at2(r, c);
            g.Wmu[c] += static_cast<float>(dmu * hv);
            g.Wa[c] += static_cast<float>(dla * hv);
            dh[c] = dmu * h.Wmu[c] + dla * h.Wa[c];
            if (ggd) {
                g.Wb[c] += static_cast<float>(draw * hv);
                dh[c] += draw * h.Wb[c];
            }
        }
        const float* frow = ctx.features.data() + r * in;
        for (std::size_t c = 0; c < h.hidden; ++c) {
            if (ctx.hidden.at2(r, c) <= 0.0f || dh[c] == 0.0) continue;
            g.b1[c] += static_cast<float>(dh[c]);
            float* wrow = g.W1.data() + c * in;
            for (std::size_t i = 0; i < in; ++i) {
                wrow[i] += static_cast<float>(dh[c] * frow[i]);
            }
        }
    }
}

void adam_step(std::vector<Tensor*> params, std::vector<Tensor*> grads,
               std::vector<Tensor>& m, std::vector<Tensor>& v, std::size_t t,
               double lr) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        for (std::size_t i = 0; i < params[ti]->numel(); ++i) {
            const double gi = (*grads[ti])[i];
            const double mi = b1 * m[ti][i] + (1 - b1) * gi;
            const double vi = b2 * v[ti][i] + (1 - b2) * gi * gi;
            m[ti][i] = static_cast<float>(mi);
            v[ti][i] = static_cast<float>(vi);
            (*params[ti])[i] = static_cast<float>(
                (*params[ti])[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
        }
    }
}

}  // namespace

UQTrainResult train_uq(const UQTrainConfig& cfg) {
    RngStream rng(cfg.seed);
    UQHead head = UQHead::init(rng, cfg.patch, cfg.hidden, cfg.ggd_mode);

    // source-domain set: blob scenes with mild noise in [0, source_noise_max]
    std::vector<Tensor> xs, ys, preds;
    for (std::size_t i = 0; i < cfg.images; ++i) {
        RngStream item_rng = rng.split(i);
        BlobSample s = gen_blob_sample(item_rng, cfg.H);
        ShiftSpec mild;
        mild.noise_sigma = item_rng.next_uniform(0.0, cfg.source_noise_max);
        mild.contrast_gain = item_rng.next_uniform(0.8, 1.0);
        mild.blur_radius = item_rng.next_uniform() < 0.5 ? 1.0 : 0.0;
        Tensor x = apply_shift(s.x, mild, item_rng);
        preds.push_back(frozen_predictor(x));
        xs.push_back(std::move(x));
        ys.push_back(s.gt);
    }

    std::vector<Tensor*> param_list = {&head.W1, &head.b1, &head.Wmu, &head.bmu,
                                       &head.Wa, &head.ba};
    if (cfg.ggd_mode) {
        param_list.push_back(&head.Wb);
        param_list.push_back(&head.bb);
    }
    std::vector<Tensor> m, v;
    for (Tensor* t : param_list) {
        m.emplace_back(t->shape());
        v.emplace_back(t->shape());
    }
    UQTrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        HeadGrads g = head_grads_zero(head);
        double epoch_loss = 0.0;
        for (std::size_t i = 0; i < cfg.images; ++i) {
            UQForwardCtx ctx;
            UQOutput out = uq_forward(xs[i], preds[i], head, &ctx);
            UQLossResult lr = cfg.ggd_mode
                                  ? uq_loss_ggd(out, ys[i], preds[i], cfg.lam_rec)
                                  : uq_loss(out, ys[i], preds[i], cfg.lam_rec);
            epoch_loss += lr.loss;
            head_backward(head, ctx, out, lr, g);
        }
        const double norm = 1.0 / static_cast<double>(cfg.images * cfg.H * cfg.H);
        std::vector<Tensor*> grad_list = {&g.W1, &g.b1, &g.Wmu, &g.bmu, &g.Wa, &g.ba};
        if (cfg.ggd_mode) {
            grad_list.push_back(&g.Wb);
            grad_list.push_back(&g.bb);
        }
        for (Tensor* t : grad_list) {
            for (float& x : t->span()) x = static_cast<float>(x * norm);
        }
        adam_step(param_list, grad_list, m, v, epoch + 1, cfg.lr);
        result.epoch_loss.push_back(epoch_loss * norm);
    }
    result.head = std::move(head);
    return result;
}

std::vector<ShiftSpec> default_shift_grid() {
    return {
        {0.00, 1.00, 0.0}, {0.10, 0.95, 0.0}, {0.20, 0.90, 0.0},
        {0.30, 0.85, 0.0}, {0.40, 0.80, 0.0}, {0.50, 0.75, 0.0},
    };
}

OodReport eval_ood(const UQHead& head, const std::vector<ShiftSpec>& grid,
                   std::size_t images_per_level, std::size_t H,
                   std::uint64_t seed) {
    OodReport report;
    std::vector<double> areas, dices;
    for (std::size_t lvl = 0; lvl < grid.size(); ++lvl) {
        OodLevelReport lr;
        lr.shift = grid[lvl];
        for (std::size_t i = 0; i < images_per_level; ++i) {
            // same scenes at every level; the shift is the only varying factor
            RngStream item_rng = RngStream(seed).split(i);
            BlobSample s = gen_blob_sample(item_rng, H);
            RngStream shift_rng = RngStream(seed).split(1000 + lvl * 100 + i);
            Tensor x = apply_shift(s.x, grid[lvl], shift_rng);
            Tensor pred = frozen_predictor(x);
            UQOutput out = uq_forward(x, pred, head);
            lr.mean_uncertain_area += uncertain_area(out.uncertainty);
            lr.mean_dice += dice_score(pred, s.gt);
        }
        lr.mean_uncertain_area /= static_cast<double>(images_per_level);
        lr.mean_dice /= static_cast<double>(images_per_level);
        areas.push_back(lr.mean_uncertain_area);
        dices.push_back(lr.mean_dice);
        report.levels.push_back(lr);
    }
    report.pearson_area_vs_dice = pearson_corr(areas, dices);
    double mse = 0.0;
    for (std::size_t i = 0; i < areas.size(); ++i) {
        const double err = 1.0 - dices[i];
        mse += (areas[i] - err) * (areas[i] - err);
    }
    report.mse_area_vs_error = mse / static_cast<double>(areas.size());
    return report;
}

std::string OodReport::to_json() const {
    nlohmann::json j;
    for (const auto& l : levels) {
        j["levels"].push_back({{"noise_sigma", l.shift.noise_sigma},
                               {"contrast_gain", l.shift.contrast_gain},
                               {"blur_radius", l.shift.blur_radius},
                               {"mean_uncertain_area", l.mean_uncertain_area},
                               {"mean_dice", l.mean_dice}});
    }
    j["pearson_area_vs_dice"] = pearson_area_vs_dice;
    j["mse_area_vs_error"] = mse_area_vs_error;
    return j.dump(2) + "\n";
}

std::string OodReport::to_csv() const {
    std::string csv = "noise_sigma,contrast_gain,blur_radius,mean_uncertain_area,mean_dice\n";
    char row[256];
    for (const auto& l : levels) {
        std::snprintf(row, sizeof(row), "%g,%g,%g,%.10g,%.10g\n", l.shift.noise_sigma,
                      l.shift.contrast_gain, l.shift.blur_radius,
                      l.mean_uncertain_area, l.mean_dice);
        csv += row;
    }
    return csv;
}

void save_uq_head(const std::string& dir, const UQHead& head) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["patch"] = head.patch;
    manifest["hidden"] = head.hidden;
    manifest["ggd_mode"] = head.ggd_mode;
    const auto names = head.tensor_names();
    const auto ts = head.tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string file = names[i] + ".gmt";
        save_tensor(dir + "/" + file, *ts[i]);
        manifest["tensors"][names[i]] = file;
    }
    atomic_write_text(dir + "/head.json", manifest.dump(2) + "\n");
}

UQHead load_uq_head(const std::string& dir) {
    std::ifstream f(dir + "/head.json");
    if (!f) throw TensorError("cannot open UQ head manifest in " + dir);
    nlohmann::json manifest = nlohmann::json::parse(f);
    UQHead head;
    head.patch = manifest.at("patch").get<std::size_t>();
    head.hidden = manifest.at("hidden").get<std::size_t>();
    head.ggd_mode = manifest.at("ggd_mode").get<bool>();
    const auto names = head.tensor_names();
    auto ts = head.tensors();
    for (std::size_t i = 0; i < names.size(); ++i) {
        *ts[i] = load_tensor(
            dir + "/" + manifest.at("tensors").at(names[i]).get<std::string>());
    }
    return head;
}

}  // namespace gm
