#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "forestreg/sarfeat.hpp"

using namespace forestreg;
namespace fs = std::filesystem;

namespace {

RasterGrid grid_1x2() {
    RasterGrid g;
    g.origin_y = 10.0;
    g.cell_size = 10.0;
    g.width = 2;
    g.height = 1;
    return g;
}

BandRaster scene(float vv0, float vh0, float vv1, float vh1) {
    BandRaster s(grid_1x2(), {"vv", "vh"});
    s.at(0, 0, 0) = vv0;
    s.at(1, 0, 0) = vh0;
    s.at(0, 0, 1) = vv1;
    s.at(1, 0, 1) = vh1;
    return s;
}

}  // namespace

TEST_CASE("decibel conversion matches 10*log10") {
    BandRaster lin(grid_1x2(), {"vv", "vh"});
    lin.at(0, 0, 0) = 0.5f;
    lin.at(1, 0, 0) = 1.0f;
    lin.at(0, 0, 1) = 0.25f;
    lin.at(1, 0, 1) = 2.0f;
    const BandRaster db = to_decibel(lin);
    CHECK(db.at(0, 0, 0) == doctest::Approx(-3.010299956639812).epsilon(1e-6));
    CHECK(db.at(1, 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(db.at(0, 0, 1) == doctest::Approx(-6.020599913279624).epsilon(1e-6));
    CHECK(db.at(1, 0, 1) == doctest::Approx(3.010299956639812).epsilon(1e-6));

    const BandRaster back = to_linear(db);
    CHECK(back.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(back.at(1, 0, 1) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("decibel conversion maps zero to nodata and rejects negatives") {
    BandRaster lin(grid_1x2(), {"vv", "vh"});
    lin.at(0, 0, 0) = 0.0f;
    lin.at(1, 0, 0) = 1.0f;
    lin.at(0, 0, 1) = 1.0f;
    lin.at(1, 0, 1) = 1.0f;
    const BandRaster db = to_decibel(lin);
    CHECK(is_nodata(db.at(0, 0, 0)));
    CHECK(db.at(1, 0, 0) == doctest::Approx(0.0));

    lin.at(0, 0, 1) = -0.5f;
    CHECK_THROWS_AS(to_decibel(lin), ValidationError);
}

TEST_CASE("normalised difference index") {
    const std::vector<float> vv = {0.3f, 0.5f, 0.0f};
    const std::vector<float> vh = {0.1f, 0.5f, 0.0f};
    const auto out = ndi(vv, vh);
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(0.0));
    CHECK(is_nodata(out[2]));  // non-positive denominator
}

TEST_CASE("temporal statistics over an odd-count stack") {
    IntensityStack stack;
    stack.scale = IntensityScale::Linear;
    stack.scenes.push_back(scene(0.5f, 0.25f, 1.0f, 1.0f));
    stack.scenes.push_back(scene(1.0f, 0.5f, 1.0f, 1.0f));
    stack.scenes.push_back(scene(0.25f, 0.125f, 1.0f, 1.0f));

    const BandRaster feat = temporal_stats(stack);
    REQUIRE(feat.band_count() == 9);
    const auto idx = [&](const char* n) { return feat.band_index(n); };

    // Pixel 0: vv dB = {-3.0103, 0, -6.0206}, vh dB = {-6.0206, -3.0103, -9.0309}.
    const double db_half = -3.010299956639812;
    CHECK(feat.at(idx("mean_vv"), 0, 0) == doctest::Approx(db_half).epsilon(1e-6));
    CHECK(feat.at(idx("mean_vh"), 0, 0) == doctest::Approx(2.0 * db_half).epsilon(1e-6));
    CHECK(feat.at(idx("min_vv"), 0, 0) == doctest::Approx(2.0 * db_half).epsilon(1e-6));
    CHECK(feat.at(idx("max_vv"), 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(feat.at(idx("min_vh"), 0, 0) == doctest::Approx(3.0 * db_half).epsilon(1e-6));
    CHECK(feat.at(idx("max_vh"), 0, 0) == doctest::Approx(db_half).epsilon(1e-6));
    CHECK(feat.at(idx("median_vv"), 0, 0) == doctest::Approx(db_half).epsilon(1e-6));
    CHECK(feat.at(idx("median_vh"), 0, 0) == doctest::Approx(2.0 * db_half).epsilon(1e-6));

    // NDI from the temporal means of the linear intensities.
    const double mean_vv = (0.5 + 1.0 + 0.25) / 3.0;
    const double mean_vh = (0.25 + 0.5 + 0.125) / 3.0;
    CHECK(feat.at(idx("ndi"), 0, 0) ==
          doctest::Approx((mean_vv - mean_vh) / (mean_vv + mean_vh)).epsilon(1e-6));

    // Pixel 1 is constant 1.0 -> all statistics 0 dB, NDI 0.
    CHECK(feat.at(idx("mean_vv"), 0, 1) == doctest::Approx(0.0));
    CHECK(feat.at(idx("median_vh"), 0, 1) == doctest::Approx(0.0));
    CHECK(feat.at(idx("ndi"), 0, 1) == doctest::Approx(0.0));
}

TEST_CASE("even-count medians average the middle pair") {
    IntensityStack stack;
    stack.scenes.push_back(scene(0.25f, 1.0f, 1.0f, 1.0f));
    stack.scenes.push_back(scene(0.5f, 1.0f, 1.0f, 1.0f));
    stack.scenes.push_back(scene(1.0f, 1.0f, 1.0f, 1.0f));
    stack.scenes.push_back(scene(2.0f, 1.0f, 1.0f, 1.0f));

    const BandRaster feat = temporal_stats(stack);
    // vv dB sorted: {-6.0206, -3.0103, 0, 3.0103}; median = mean of middle two.
    CHECK(feat.at(feat.band_index("median_vv"), 0, 0) ==
          doctest::Approx(0.5 * (-3.010299956639812 + 0.0)).epsilon(1e-6));
}

TEST_CASE("nodata in any scene poisons the pixel") {
    IntensityStack stack;
    stack.scenes.push_back(scene(0.5f, 0.25f, 1.0f, 1.0f));
    auto s2 = scene(1.0f, 0.5f, 1.0f, 1.0f);
    s2.at(0, 0, 0) = kNoData;
    stack.scenes.push_back(s2);

    const BandRaster feat = temporal_stats(stack);
    for (int b = 0; b < feat.band_count(); ++b) CHECK(is_nodata(feat.at(b, 0, 0)));
    for (int b = 0; b < feat.band_count(); ++b) CHECK_FALSE(is_nodata(feat.at(b, 0, 1)));
}

TEST_CASE("decibel-scale input gives the same features") {
    IntensityStack lin;
    lin.scenes.push_back(scene(0.5f, 0.25f, 2.0f, 1.0f));
    lin.scenes.push_back(scene(1.0f, 0.5f, 0.5f, 0.125f));

    IntensityStack db;
    db.scale = IntensityScale::Decibel;
    for (const auto& s : lin.scenes) db.scenes.push_back(to_decibel(s));

    const BandRaster a = temporal_stats(lin);
    const BandRaster b = temporal_stats(db);
    for (int band = 0; band < a.band_count(); ++band)
        for (int c = 0; c < 2; ++c)
            CHECK(a.at(band, 0, c) == doctest::Approx(b.at(band, 0, c)).epsilon(1e-5));
}

TEST_CASE("single-scene features") {
    const BandRaster feat = single_scene_features(scene(0.5f, 0.25f, 1.0f, 1.0f),
                                                  IntensityScale::Linear);
    REQUIRE(feat.band_count() == 3);
    CHECK(feat.at(feat.band_index("vv_db"), 0, 0) ==
          doctest::Approx(-3.010299956639812).epsilon(1e-6));
    CHECK(feat.at(feat.band_index("vh_db"), 0, 0) ==
          doctest::Approx(-6.020599913279624).epsilon(1e-6));
    CHECK(feat.at(feat.band_index("ndi"), 0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("intensity stack round-trips through disk") {
    IntensityStack stack;
    stack.scenes.push_back(scene(0.5f, 0.25f, 2.0f, 1.0f));
    stack.scenes.push_back(scene(1.0f, 0.5f, 0.5f, 0.125f));

    const fs::path dir = fs::temp_directory_path() / "forestreg_test_stack";
    fs::remove_all(dir);
    save_intensity_stack(stack, dir);
    const IntensityStack back = load_intensity_stack(dir);
    REQUIRE(back.scenes.size() == 2);
    CHECK(back.scale == IntensityScale::Linear);
    for (std::size_t s = 0; s < 2; ++s)
        for (int b = 0; b < 2; ++b)
            CHECK(back.scenes[s].band(b) == stack.scenes[s].band(b));
    fs::remove_all(dir);
}
