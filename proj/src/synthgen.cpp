#include "forestreg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "forestreg/rng.hpp"

namespace forestreg {

namespace {

// 3x3 box filter with replicated borders.
void box3(std::vector<double>& f, int w, int h, int passes) {
    std::vector<double> tmp(f.size());
    for (int p = 0; p < passes; ++p) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                double acc = 0.0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = std::clamp(r + dr, 0, h - 1);
                        const int cc = std::clamp(c + dc, 0, w - 1);
                        acc += f[static_cast<std::size_t>(rr) * w + cc];
                    }
                tmp[static_cast<std::size_t>(r) * w + c] = acc / 9.0;
            }
        f.swap(tmp);
    }
}

std::vector<double> smooth_noise(int w, int h, int passes, Rng& rng) {
    std::vector<double> f(static_cast<std::size_t>(w) * h);
    for (auto& v : f) v = rng.uniform();
    box3(f, w, h, passes);
    return f;
}

void minmax_normalize(std::vector<double>& f) {
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double span = *hi - *lo;
    if (span <= 0.0) {
        std::fill(f.begin(), f.end(), 0.5);
        return;
    }
    for (auto& v : f) v = (v - *lo) / span;
}

std::vector<Point> strip_ring(double min_x, double max_x, double max_y, double s, double a,
                              double b) {
    const double y_top = max_y - a * s;
    const double y_bot = max_y - b * s;
    return {{min_x, y_bot}, {max_x, y_bot}, {max_x, y_top}, {min_x, y_top}};
}

}  // namespace

void SynthSpec::validate() const {
    if (width < 128 || height < 128) throw ValidationError("synth scene must be at least 128x128");
    if (!(coverage > 0.0 && coverage <= 1.0)) throw ValidationError("coverage must be in (0, 1]");
    if (plots < 10) throw ValidationError("need at least 10 plots");
    if (scenes < 1) throw ValidationError("need at least 1 SAR scene");
    if (!(cell_size > 0.0)) throw ValidationError("cell_size must be > 0");
    if (!(value_max > 0.0)) throw ValidationError("value_max must be > 0");
    if (smooth_passes < 0) throw ValidationError("smooth_passes must be >= 0");
    if (speckle < 0.0 || poly_noise < 0.0) throw ValidationError("noise sigmas must be >= 0");
}

SynthScene generate_scene(const SynthSpec& spec) {
    spec.validate();
    RasterGrid grid;
    grid.origin_x = 0.0;
    grid.origin_y = spec.height * spec.cell_size;
    grid.cell_size = spec.cell_size;
    grid.width = spec.width;
    grid.height = spec.height;
    const std::size_t n = static_cast<std::size_t>(spec.width) * spec.height;
    const double s = spec.cell_size;

    SynthScene out;

    Rng truth_rng(mix_seed(spec.seed, 0x70b));
    auto latent = smooth_noise(spec.width, spec.height, spec.smooth_passes, truth_rng);
    minmax_normalize(latent);
    for (auto& v : latent) v *= spec.value_max;
    out.truth = BandRaster(grid, {"truth"});
    for (std::size_t i = 0; i < n; ++i) out.truth.band(0)[i] = static_cast<float>(latent[i]);

    // Covered cells: second smooth field thresholded at the (1 - coverage)
    // quantile.
    Rng cover_rng(mix_seed(spec.seed, 0xc0f));
    auto cover = smooth_noise(spec.width, spec.height, spec.smooth_passes, cover_rng);
    std::vector<double> sorted = cover;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t qi = std::min(
        n - 1, static_cast<std::size_t>((1.0 - spec.coverage) * static_cast<double>(n)));
    const double thr = sorted[qi];

    Rng poly_rng(mix_seed(spec.seed, 0x901));
    char idbuf[32];
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * spec.width + c;
            if (cover[i] < thr) continue;
            const double t = static_cast<double>(out.truth.band(0)[i]);
            const double z =
                std::max(0.0, t + spec.poly_bias + spec.poly_noise * poly_rng.normal());
            const double min_x = grid.cell_min_x(c) + 0.02 * s;
            const double max_x = grid.cell_min_x(c) + 0.98 * s;
            const double max_y = grid.cell_max_y(r);
            const int parts = 1 + static_cast<int>(poly_rng.below(2));
            if (parts == 1) {
                const double f = 0.55 + 0.35 * poly_rng.uniform();
                std::snprintf(idbuf, sizeof idbuf, "p%08zu", out.polygons.size());
                out.polygons.push_back(
                    {idbuf, strip_ring(min_x, max_x, max_y, s, 0.05, 0.05 + f), z, {}});
            } else {
                // Split the value exactly: z/2 and z - z/2 sum back to z.
                const double f1 = 0.28 + 0.14 * poly_rng.uniform();
                const double f2 = 0.28 + 0.14 * poly_rng.uniform();
                const double v1 = z / 2.0;
                const double v2 = z - v1;
                std::snprintf(idbuf, sizeof idbuf, "p%08zu", out.polygons.size());
                out.polygons.push_back(
                    {idbuf, strip_ring(min_x, max_x, max_y, s, 0.02, 0.02 + f1), v1, {}});
                std::snprintf(idbuf, sizeof idbuf, "p%08zu", out.polygons.size());
                out.polygons.push_back(
                    {idbuf, strip_ring(min_x, max_x, max_y, s, 0.98 - f2, 0.98), v2, {}});
            }
        }

    // Plots: distinct random cells, truth value at the cell center.
    Rng plot_rng(mix_seed(spec.seed, 0x9107));
    std::vector<std::size_t> cells(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = i;
    plot_rng.shuffle(cells);
    for (int p = 0; p < spec.plots; ++p) {
        const std::size_t i = cells[static_cast<std::size_t>(p)];
        const int r = static_cast<int>(i) / spec.width;
        const int c = static_cast<int>(i) % spec.width;
        PlotRecord rec;
        rec.x = grid.cell_min_x(c) + 0.5 * s;
        rec.y = grid.cell_max_y(r) - 0.5 * s;
        rec.value = static_cast<double>(out.truth.band(0)[i]);
        out.plots.push_back(rec);
    }

    // SAR: saturating backscatter curves with unit-mean multiplicative
    // speckle, emitted as linear intensities.
    out.stack.scale = IntensityScale::Linear;
    const double half_var = 0.5 * spec.speckle * spec.speckle;
    for (int sc = 0; sc < spec.scenes; ++sc) {
        Rng sar_rng(mix_seed(spec.seed, 0x5a5 + static_cast<std::uint64_t>(sc)));
        BandRaster scene(grid, {"vv", "vh"}, 0.0f);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(out.truth.band(0)[i]);
            const double sat = t / (t + 200.0);
            const double mu_vv = 0.3 * sat + 0.02;
            const double mu_vh = 0.1 * sat + 0.005;
            scene.band(0)[i] =
                static_cast<float>(mu_vv * std::exp(spec.speckle * sar_rng.normal() - half_var));
            scene.band(1)[i] =
                static_cast<float>(mu_vh * std::exp(spec.speckle * sar_rng.normal() - half_var));
        }
        out.stack.scenes.push_back(std::move(scene));
    }
    out.stack.validate();
    return out;
}

void SynthScene::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    truth.save(dir / "truth");
    save_polygons_jsonl(polygons, dir / "polygons.jsonl");
    save_plots_csv(plots, dir / "plots.csv");
    save_intensity_stack(stack, dir / "sar");
}

}  // namespace forestreg
