#include <doctest.h>

#include <cmath>
#include <cstring>

#include "forestreg/infer.hpp"
#include "forestreg/rng.hpp"

using namespace forestreg;

namespace {

GeneratorNet<float> constant_net(float bias) {
    GeneratorConfig gc;
    gc.in_channels = 3;
    gc.depth = 4;
    gc.stem_width = 4;
    gc.norm = NormKind::None;
    GeneratorNet<float> net(gc);
    net.init(1);
    for (auto* p : net.params()) p->w.zero();
    for (auto* p : net.params())
        if (p->name == "head.conv.b") p->w.v[0] = bias;
    return net;
}

BandRaster feature_raster(int w, int h, std::uint64_t seed) {
    RasterGrid grid{0.0, static_cast<double>(h), 1.0, w, h};
    BandRaster feat(grid, {"f0", "f1", "f2"});
    Rng rng(seed);
    for (int b = 0; b < 3; ++b)
        for (auto& v : feat.band(b)) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return feat;
}

}  // namespace

TEST_CASE("ramp weights are linear, symmetric and border-floored") {
    const double expected5[] = {1.0 / 3, 2.0 / 3, 1.0, 2.0 / 3, 1.0 / 3};
    for (int i = 0; i < 5; ++i) CHECK(ramp_weight(i, 5) == doctest::Approx(expected5[i]).epsilon(1e-15));

    CHECK(ramp_weight(0, 64) == doctest::Approx(1.0 / 32).epsilon(1e-15));
    CHECK(ramp_weight(63, 64) == doctest::Approx(1.0 / 32).epsilon(1e-15));
    CHECK(ramp_weight(31, 64) == 1.0);
    CHECK(ramp_weight(32, 64) == 1.0);
    for (int i = 0; i < 64; ++i) CHECK(ramp_weight(i, 64) == ramp_weight(63 - i, 64));
    CHECK(ramp_weight(0, 1) == 1.0);
}

TEST_CASE("window starts tile the scene and re-anchor the last window") {
    CHECK(window_starts(100, 64, 32) == std::vector<int>{0, 32, 36});
    CHECK(window_starts(128, 64, 32) == std::vector<int>{0, 32, 64});
    CHECK(window_starts(64, 64, 32) == std::vector<int>{0});
    CHECK(window_starts(65, 64, 32) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(window_starts(32, 64, 32), ValidationError);

    // Every pixel of [0, scene) is covered by at least one window.
    const auto starts = window_starts(150, 64, 32);
    std::vector<int> cover(150, 0);
    for (int s : starts)
        for (int i = s; i < s + 64; ++i) ++cover[static_cast<std::size_t>(i)];
    for (int c : cover) CHECK(c >= 1);
}

TEST_CASE("a constant network mosaics to a constant scene") {
    auto net = constant_net(3.7f);
    const BandRaster feat = feature_raster(100, 96, 5);
    const BandRaster pred = predict_scene(net, feat, BlendSpec{}, 64, 32);
    REQUIRE(pred.band_count() == 1);
    CHECK(pred.band_names()[0] == "prediction");
    CHECK(pred.grid() == feat.grid());
    // The blend weights are normalized per pixel, so overlapping constant
    // patches must reproduce the constant to rounding error.
    for (float v : pred.band(0)) CHECK(std::abs(static_cast<double>(v) - 3.7) <= 1e-6);
}

TEST_CASE("single-window coverage is a plain forward pass") {
    GeneratorConfig gc;
    gc.in_channels = 3;
    gc.depth = 4;
    gc.stem_width = 4;
    gc.norm = NormKind::Instance;
    GeneratorNet<float> net(gc);
    net.init(77);

    const BandRaster feat = feature_raster(64, 64, 9);
    const BandRaster mosaic = predict_scene(net, feat, BlendSpec{}, 64, 32);

    net.set_train(false);
    Tensor<float> x(1, 3, 64, 64);
    for (int b = 0; b < 3; ++b)
        std::memcpy(x.plane(0, b), feat.band(b).data(), sizeof(float) * 64 * 64);
    const Tensor<float> direct = net.forward(x);

    const auto& band = mosaic.band(0);
    const float* dp = direct.plane(0, 0);
    for (std::size_t i = 0; i < band.size(); ++i)
        CHECK(band[i] == dp[i]);  // weight 1/1, bitwise
}

TEST_CASE("rmse and mae agree with hand values and respect masks") {
    MetricReport rep = rmse_mae({1.0f, 2.0f}, {0.0f, 4.0f});
    CHECK(rep.n == 2);
    CHECK(rep.mae == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(rep.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));

    // Mask: zero and NaN entries are excluded.
    const std::vector<float> mask = {1.0f, 0.0f, kNoData, 2.0f};
    rep = rmse_mae({1, 2, 3, 4}, {1, 0, 0, 6}, &mask);
    CHECK(rep.n == 2);
    CHECK(rep.mae == doctest::Approx(1.0).epsilon(1e-15));

    // Without a mask, NaN pairs are skipped.
    rep = rmse_mae({1.0f, kNoData, 3.0f}, {2.0f, 5.0f, kNoData});
    CHECK(rep.n == 1);
    CHECK(rep.rmse == 1.0);

    const std::vector<float> zeros = {0.0f, 0.0f};
    CHECK_THROWS_AS(rmse_mae({1.0f, 2.0f}, {1.0f, 2.0f}, &zeros), ValidationError);
    CHECK_THROWS_AS(rmse_mae({1.0f}, {1.0f, 2.0f}), ValidationError);
}

TEST_CASE("rmse dominates mae on random data") {
    Rng rng(123);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.below(64));
        std::vector<float> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = static_cast<float>(rng.uniform(-100.0, 100.0));
            y[i] = static_cast<float>(rng.uniform(-100.0, 100.0));
        }
        const MetricReport rep = rmse_mae(p, y);  // throws internally if violated
        CHECK(rep.rmse >= rep.mae * (1.0 - 1e-12));
    }
}

TEST_CASE("cv summary uses the population standard deviation") {
    const MetricReport rep = cv_from_fold_rmses({1.0, 2.0, 3.0});
    CHECK(rep.n == 3);
    CHECK(rep.cv_rmse_mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(rep.cv_rmse_std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(cv_from_fold_rmses({}), ValidationError);
}

TEST_CASE("plot footprints average by intersection area") {
    // 8x8 grid, cell 10; band value = column index.
    RasterGrid grid{0.0, 80.0, 10.0, 8, 8};
    BandRaster pred(grid, {"prediction"});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) pred.at(0, r, c) = static_cast<float>(c);

    SUBCASE("footprint inside one cell") {
        const auto v = plot_footprint_values(pred, {{35.0, 45.0, 0.0}}, 4.0);
        CHECK(v.size() == 1);
        CHECK(v[0] == doctest::Approx(3.0).epsilon(1e-12));
    }

    SUBCASE("footprint split evenly across a column boundary") {
        // Center on the x = 40 boundary: the polygonized circle is mirror
        // symmetric, so columns 3 and 4 get equal weight.
        const auto v = plot_footprint_values(pred, {{40.0, 45.0, 0.0}}, 6.0);
        CHECK(v[0] == doctest::Approx(3.5).epsilon(1e-12));
    }

    SUBCASE("constant raster gives the constant for any placement") {
        BandRaster flat(grid, {"prediction"});
        for (auto& v : flat.band(0)) v = 42.0f;
        Rng rng(31);
        std::vector<PlotRecord> plots;
        for (int i = 0; i < 50; ++i)
            plots.push_back({rng.uniform(5.0, 75.0), rng.uniform(5.0, 75.0), 0.0});
        const auto vals = plot_footprint_values(flat, plots, 7.0);
        for (double v : vals) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
    }

    SUBCASE("area weighting against closed-form circular segments") {
        // Footprint centered inside column 3 but overhanging into column 4:
        // compare with the exact strip areas of the 64-gon via the shared
        // polygon clipper on a one-cell-wide rectangle.
        const double cx = 38.0, cy = 45.0, rad = 6.0;
        const auto v = plot_footprint_values(pred, {{cx, cy, 0.0}}, rad);
        std::vector<Point> ring;
        for (int i = 0; i < 64; ++i) {
            const double a = 2.0 * 3.14159265358979323846 * i / 64;
            ring.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
        }
        const double left = std::abs(shoelace_area(clip_to_rect(ring, 30.0, 30.0, 40.0, 60.0)));
        const double right = std::abs(shoelace_area(clip_to_rect(ring, 40.0, 30.0, 50.0, 60.0)));
        const double expected = (3.0 * left + 4.0 * right) / (left + right);
        CHECK(v[0] == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("nodata cells drop out of the weighting") {
        BandRaster holed = pred;
        for (int r = 0; r < 8; ++r) holed.at(0, r, 4) = kNoData;
        const auto v = plot_footprint_values(holed, {{40.0, 45.0, 0.0}}, 6.0);
        CHECK(v[0] == doctest::Approx(3.0).epsilon(1e-12));  // only column 3 remains
    }

    SUBCASE("footprint entirely outside the grid is nan") {
        const auto v = plot_footprint_values(pred, {{500.0, 500.0, 0.0}}, 6.0);
        CHECK(std::isnan(v[0]));
        CHECK_THROWS_AS(plot_level_eval(pred, {{500.0, 500.0, 0.0}}, 6.0), ValidationError);
        CHECK_THROWS_AS(plot_footprint_values(pred, {{40.0, 45.0, 0.0}}, 0.0), ValidationError);
    }
}

TEST_CASE("plot level eval scores footprint means against plot truth") {
    RasterGrid grid{0.0, 80.0, 10.0, 8, 8};
    BandRaster pred(grid, {"prediction"});
    for (auto& v : pred.band(0)) v = 15.0f;

    const std::vector<PlotRecord> plots = {{20.0, 40.0, 10.0}, {60.0, 40.0, 20.0}};
    const MetricReport rep = plot_level_eval(pred, plots, 7.0);
    CHECK(rep.n == 2);
    CHECK(rep.mae == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rep.rmse == doctest::Approx(5.0).epsilon(1e-12));
}
