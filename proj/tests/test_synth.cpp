#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gm/synth.hpp"

using namespace gm;

TEST_CASE("gen_scene shape and determinism") {
    RngStream a(5), b(5);
    const BaseScene s1 = gen_scene(a, 1, 4);
    const BaseScene s2 = gen_scene(b, 1, 4);
    CHECK(s1.field.shape() == std::vector<std::size_t>{1, 4, 4});
    CHECK(s1.field == s2.field);
}

TEST_CASE("smoothing reduces field variance") {
    RngStream rng(17);
    const BaseScene s = gen_scene(rng, 4, 32);
    double mean = 0.0;
    for (float v : s.field.span()) mean += v;
    mean /= static_cast<double>(s.field.numel());
    double var = 0.0;
    for (float v : s.field.span()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.field.numel());

    // raw i.i.d. reference from an independent stream has variance ~= 1
    RngStream raw_rng(18);
    double raw_var = 0.0;
    const std::size_t n = 4 * 32 * 32;
    std::vector<double> raw(n);
    double raw_mean = 0.0;
    for (auto& v : raw) {
        v = raw_rng.next_gaussian();
        raw_mean += v;
    }
    raw_mean /= static_cast<double>(n);
    for (double v : raw) raw_var += (v - raw_mean) * (v - raw_mean);
    raw_var /= static_cast<double>(n);

    CHECK(var < raw_var);
    CHECK(var < 0.5 * raw_var);  // two box blurs shrink variance a lot
}

TEST_CASE("identity crop gives the regular lattice in pos") {
    RngStream rng(3);
    const std::size_t R = 3, S = 4;
    const BaseScene scene = gen_scene(rng, 2, 16);
    ViewTransform tf;  // identity crop, no flip, no noise
    ViewBatch out;
    out.y = Tensor({1, 2, R, S});
    out.pos = Tensor({1, R, S, 2});
    RngStream noise(0);
    apply_view(scene, tf, R, S, noise, 0, out);
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t s = 0; s < S; ++s) {
            const double ex = static_cast<double>(s) / (S - 1);
            const double ey = static_cast<double>(r) / (R - 1);
            CHECK(out.pos.at4(0, r, s, 0) == doctest::Approx(ex).epsilon(1e-6));
            CHECK(out.pos.at4(0, r, s, 1) == doctest::Approx(ey).epsilon(1e-6));
        }
    }
}

TEST_CASE("hflip reverses columns") {
    RngStream rng(9);
    const std::size_t R = 3, S = 3, D = 2;
    const BaseScene scene = gen_scene(rng, D, 16);
    ViewTransform plain, flipped;
    flipped.hflip = true;
    ViewBatch a, b;
    a.y = Tensor({1, D, R, S});
    a.pos = Tensor({1, R, S, 2});
    b.y = Tensor({1, D, R, S});
    b.pos = Tensor({1, R, S, 2});
    RngStream n1(0), n2(0);
    apply_view(scene, plain, R, S, n1, 0, a);
    apply_view(scene, flipped, R, S, n2, 0, b);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t s = 0; s < S; ++s) {
                CHECK(b.y.at4(0, d, r, s) ==
                      doctest::Approx(a.y.at4(0, d, r, S - 1 - s)).epsilon(1e-6));
            }
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t s = 0; s < S; ++s) {
            CHECK(b.pos.at4(0, r, s, 0) ==
                  doctest::Approx(a.pos.at4(0, r, S - 1 - s, 0)).epsilon(1e-6));
        }
    }
}

TEST_CASE("identical noise-free crops give identical features") {
    RngStream rng(21);
    const BaseScene scene = gen_scene(rng, 3, 16);
    ViewTransform tf;
    tf.x0 = 0.2;
    tf.y0 = 0.1;
    tf.w = 0.6;
    tf.h = 0.7;
    ViewBatch a, b;
    a.y = Tensor({1, 3, 5, 5});
    a.pos = Tensor({1, 5, 5, 2});
    b.y = Tensor({1, 3, 5, 5});
    b.pos = Tensor({1, 5, 5, 2});
    RngStream n1(1), n2(2);  // different noise streams, sigma = 0 so unused
    apply_view(scene, tf, 5, 5, n1, 0, a);
    apply_view(scene, tf, 5, 5, n2, 0, b);
    CHECK(a.y == b.y);
    CHECK(a.pos == b.pos);
}

TEST_CASE("make_batch shapes and pairing") {
    RngStream rng(1);
    BatchCfg cfg;  // defaults: D=8, R=S=7
    ViewBatch xs, xt;
    make_batch(rng, 16, cfg, xs, xt);
    CHECK(xs.y.shape() == std::vector<std::size_t>{16, 8, 7, 7});
    CHECK(xs.pos.shape() == std::vector<std::size_t>{16, 7, 7, 2});
    CHECK(xt.y.shape() == std::vector<std::size_t>{16, 8, 7, 7});
    CHECK(xt.pos.shape() == std::vector<std::size_t>{16, 7, 7, 2});

    RngStream rng2(1);
    ViewBatch xs2, xt2;
    make_batch(rng2, 16, cfg, xs2, xt2);
    CHECK(xs.y == xs2.y);
    CHECK(xt.pos == xt2.pos);
}

TEST_CASE("crop_overlap_area on hand rectangles") {
    ViewTransform a, b;
    a.x0 = 0.0; a.y0 = 0.0; a.w = 0.5; a.h = 0.5;
    b.x0 = 0.25; b.y0 = 0.25; b.w = 0.5; b.h = 0.5;
    CHECK(crop_overlap_area(a, b) == doctest::Approx(0.0625));
    b.x0 = 0.6; b.y0 = 0.6;
    CHECK(crop_overlap_area(a, b) == doctest::Approx(0.0));
    CHECK(crop_overlap_area(a, a) == doctest::Approx(0.25));
}

TEST_CASE("paired views always intersect by at least min_overlap") {
    BatchCfg cfg;
    cfg.D = 2;
    cfg.G = 8;
    cfg.R = 3;
    cfg.S = 3;
    // transforms are not exposed, but the shared-coordinate contract is: some
    // pos entries of the two views must be close in original coordinates when
    // the crops overlap. Verify the weaker invariant that every pos stays in
    // the unit square and the batch builds without resample exhaustion.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed);
        ViewBatch xs, xt;
        make_batch(rng, 4, cfg, xs, xt);
        for (float v : xs.pos.span()) {
            CHECK(v >= -1e-6f);
            CHECK(v <= 1.0f + 1e-6f);
        }
    }
}

TEST_CASE("batch directory round trip") {
    RngStream rng(77);
    BatchCfg cfg;
    cfg.D = 3;
    cfg.G = 8;
    cfg.R = 3;
    cfg.S = 3;
    ViewBatch xs, xt;
    make_batch(rng, 4, cfg, xs, xt);
    const auto dir = std::filesystem::temp_directory_path() / "gm_batch_test";
    std::filesystem::remove_all(dir);
    save_batch_dir(dir.string(), xs, xt, cfg, 77);
    ViewBatch rs, rt;
    load_batch_dir(dir.string(), rs, rt);
    CHECK(rs.y == xs.y);
    CHECK(rs.pos == xs.pos);
    CHECK(rt.y == xt.y);
    CHECK(rt.pos == xt.pos);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "pos_s.gmt"));
}
