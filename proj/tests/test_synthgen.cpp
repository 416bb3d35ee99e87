#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forestreg/sarfeat.hpp"
#include "forestreg/synthgen.hpp"

using namespace forestreg;

namespace {

SynthSpec base_spec() {
    SynthSpec spec;
    spec.width = 128;
    spec.height = 128;
    spec.cell_size = 16.0;
    spec.coverage = 0.6;
    spec.plots = 30;
    spec.scenes = 3;
    spec.seed = 42;
    return spec;
}

// Spearman rank correlation (average ranks are unnecessary here: the inputs
// are continuous, ties have measure zero).
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    const std::size_t n = a.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double mean = (static_cast<double>(n) - 1.0) / 2.0;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (ra[i] - mean) * (rb[i] - mean);
        da += (ra[i] - mean) * (ra[i] - mean);
        db += (rb[i] - mean) * (rb[i] - mean);
    }
    return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("synth spec validation") {
    SynthSpec spec = base_spec();
    CHECK_NOTHROW(spec.validate());
    spec.width = 64;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = base_spec();
    spec.coverage = 0.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = base_spec();
    spec.coverage = 1.5;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = base_spec();
    spec.plots = 5;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = base_spec();
    spec.scenes = 0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = base_spec();
    spec.speckle = -0.1;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("generation is bitwise deterministic per seed") {
    const SynthSpec spec = base_spec();
    const SynthScene a = generate_scene(spec);
    const SynthScene b = generate_scene(spec);

    CHECK(a.truth.band(0) == b.truth.band(0));
    REQUIRE(a.polygons.size() == b.polygons.size());
    for (std::size_t i = 0; i < a.polygons.size(); ++i) {
        CHECK(a.polygons[i].id == b.polygons[i].id);
        CHECK(a.polygons[i].value == b.polygons[i].value);
        REQUIRE(a.polygons[i].ring.size() == b.polygons[i].ring.size());
        for (std::size_t k = 0; k < a.polygons[i].ring.size(); ++k) {
            CHECK(a.polygons[i].ring[k].x == b.polygons[i].ring[k].x);
            CHECK(a.polygons[i].ring[k].y == b.polygons[i].ring[k].y);
        }
    }
    REQUIRE(a.plots.size() == b.plots.size());
    for (std::size_t i = 0; i < a.plots.size(); ++i) {
        CHECK(a.plots[i].x == b.plots[i].x);
        CHECK(a.plots[i].value == b.plots[i].value);
    }
    REQUIRE(a.stack.scenes.size() == b.stack.scenes.size());
    for (std::size_t s = 0; s < a.stack.scenes.size(); ++s) {
        CHECK(a.stack.scenes[s].band(0) == b.stack.scenes[s].band(0));
        CHECK(a.stack.scenes[s].band(1) == b.stack.scenes[s].band(1));
    }

    SynthSpec other = spec;
    other.seed = 43;
    const SynthScene c = generate_scene(other);
    CHECK(a.truth.band(0) != c.truth.band(0));
}

TEST_CASE("noiseless full coverage reproduces the truth exactly") {
    SynthSpec spec = base_spec();
    spec.coverage = 1.0;
    const SynthScene scene = generate_scene(spec);

    const MergeResult merged = merge_multipolygons(scene.polygons, scene.truth.grid());
    CHECK(merged.rejected.empty());

    const ImputedTargetSet t = coverage_filter(merged.table, scene.truth.grid(), 0.40, false);
    // Every strip stack covers >= 52% of its cell, so no cell is filtered.
    CHECK(t.pseudo_coverage() == 1.0);
    const auto& truth = scene.truth.band(0);
    const auto& pseudo = t.target.band(0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(t.m_pt.band(0)[i] == 1.0f);
        CHECK(pseudo[i] == truth[i]);  // bias 0, noise 0: values survive the merge exactly
    }
}

TEST_CASE("partial coverage lands near the requested fraction") {
    const SynthSpec spec = base_spec();  // coverage 0.6
    const SynthScene scene = generate_scene(spec);
    const MergeResult merged = merge_multipolygons(scene.polygons, scene.truth.grid());
    const ImputedTargetSet t = coverage_filter(merged.table, scene.truth.grid(), 0.40, false);
    CHECK(t.pseudo_coverage() == doctest::Approx(0.6).epsilon(0.02));
    // Uncovered cells carry no pseudo target.
    const auto& m = t.m_pt.band(0);
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] == 0.0f) CHECK(std::isnan(t.target.band(0)[i]));
}

TEST_CASE("a constant bias shifts every pseudo target by that amount") {
    SynthSpec spec = base_spec();
    spec.poly_bias = 132.0;
    const SynthScene scene = generate_scene(spec);
    const MergeResult merged = merge_multipolygons(scene.polygons, scene.truth.grid());
    const ImputedTargetSet t = coverage_filter(merged.table, scene.truth.grid(), 0.40, false);

    const auto& truth = scene.truth.band(0);
    const auto& pseudo = t.target.band(0);
    const auto& m = t.m_pt.band(0);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 1.0f) continue;
        ++covered;
        CHECK(static_cast<double>(pseudo[i]) - static_cast<double>(truth[i]) ==
              doctest::Approx(132.0).epsilon(1e-4));
    }
    CHECK(covered > m.size() / 2);
}

TEST_CASE("plots sit at distinct cell centers and carry exact truth values") {
    const SynthSpec spec = base_spec();
    const SynthScene scene = generate_scene(spec);
    REQUIRE(scene.plots.size() == 30);

    const RasterGrid& grid = scene.truth.grid();
    std::vector<std::size_t> cells;
    for (const auto& p : scene.plots) {
        REQUIRE(grid.contains(p.x, p.y));
        const int c = grid.col_of(p.x), r = grid.row_of(p.y);
        // Cell-center placement.
        CHECK(p.x == grid.cell_min_x(c) + 0.5 * grid.cell_size);
        CHECK(p.y == grid.cell_max_y(r) - 0.5 * grid.cell_size);
        CHECK(p.value == static_cast<double>(scene.truth.at(0, r, c)));
        cells.push_back(static_cast<std::size_t>(r) * grid.width + c);
    }
    std::sort(cells.begin(), cells.end());
    CHECK(std::adjacent_find(cells.begin(), cells.end()) == cells.end());
}

TEST_CASE("sar stack is linear, positive, and rank-correlated with the truth") {
    const SynthSpec spec = base_spec();
    const SynthScene scene = generate_scene(spec);
    CHECK(scene.stack.scale == IntensityScale::Linear);
    REQUIRE(scene.stack.scenes.size() == 3);
    for (const auto& sc : scene.stack.scenes) {
        CHECK(sc.band_names() == std::vector<std::string>{"vv", "vh"});
        for (float v : sc.band(0)) CHECK(v > 0.0f);
        for (float v : sc.band(1)) CHECK(v > 0.0f);
    }

    // Backscatter is monotone in the truth value, so without speckle the
    // ranks must line up essentially perfectly; with speckle the temporal
    // mean still has to carry a clear signal.
    SynthSpec clean = spec;
    clean.speckle = 0.0;
    const SynthScene quiet = generate_scene(clean);
    const std::size_t n = quiet.stack.scenes[0].band(0).size();
    std::vector<double> truth(n), clean_vv(n), mean_vv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) truth[i] = quiet.truth.band(0)[i];
    for (std::size_t i = 0; i < n; ++i) clean_vv[i] = quiet.stack.scenes[0].band(0)[i];
    for (const auto& sc : scene.stack.scenes)
        for (std::size_t i = 0; i < n; ++i) mean_vv[i] += sc.band(0)[i] / 3.0;
    CHECK(spearman(truth, clean_vv) >= 0.999);
    CHECK(spearman(truth, mean_vv) >= 0.5);
}

TEST_CASE("scene save writes the full input layout") {
    const auto dir = std::filesystem::temp_directory_path() / "forestreg_test_synth";
    std::filesystem::remove_all(dir);
    SynthSpec spec = base_spec();
    spec.plots = 12;
    const SynthScene scene = generate_scene(spec);
    scene.save(dir);

    const BandRaster truth = BandRaster::load(dir / "truth");
    CHECK(truth.band(0) == scene.truth.band(0));
    const auto polys = load_polygons_jsonl(dir / "polygons.jsonl");
    CHECK(polys.size() == scene.polygons.size());
    const auto plots = load_plots_csv(dir / "plots.csv");
    REQUIRE(plots.size() == scene.plots.size());
    for (std::size_t i = 0; i < plots.size(); ++i) CHECK(plots[i].value == scene.plots[i].value);
    const IntensityStack stack = load_intensity_stack(dir / "sar");
    REQUIRE(stack.scenes.size() == scene.stack.scenes.size());
    CHECK(stack.scenes[0].band(0) == scene.stack.scenes[0].band(0));
    std::filesystem::remove_all(dir);
}
