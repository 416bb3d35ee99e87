#include "forestreg/infer.hpp"

#include <algorithm>
#include <cmath>

namespace forestreg {

double ramp_weight(int i, int n) {
    const int half = (n + 1) / 2;
    const int d = std::min(i, n - 1 - i) + 1;  // 1 at borders, half at center
    return static_cast<double>(d) / static_cast<double>(half);
}

std::vector<int> window_starts(int scene, int patch, int stride) {
    if (scene < patch) throw ValidationError("scene smaller than patch");
    std::vector<int> out;
    for (int s = 0; s + patch <= scene; s += stride) out.push_back(s);
    if (out.back() + patch < scene) out.push_back(scene - patch);  // flush to boundary
    return out;
}

BandRaster predict_scene(GeneratorNet<float>& model, const BandRaster& features,
                         const BlendSpec& blend, int patch, int stride) {
    blend.validate();
    const int w = features.width(), h = features.height();
    const auto xs = window_starts(w, patch, stride);
    const auto ys = window_starts(h, patch, stride);

    // Per-pixel ramp weight raised to p, precomputed once per patch offset.
    std::vector<double> wp(static_cast<std::size_t>(patch) * patch);
    for (int r = 0; r < patch; ++r)
        for (int c = 0; c < patch; ++c) {
            const double wv = std::max(blend.eps, ramp_weight(r, patch) * ramp_weight(c, patch));
            wp[static_cast<std::size_t>(r) * patch + c] = std::pow(wv, blend.p);
        }

    // Pass 1: per-pixel weight normalizer (no model evaluation needed).
    std::vector<double> den(static_cast<std::size_t>(w) * h, 0.0);
    for (int y0 : ys)
        for (int x0 : xs)
            for (int r = 0; r < patch; ++r) {
                double* drow = den.data() + static_cast<std::size_t>(y0 + r) * w + x0;
                const double* wrow = wp.data() + static_cast<std::size_t>(r) * patch;
                for (int c = 0; c < patch; ++c) drow[c] += wrow[c];
            }

    // Pass 2: predict each window and accumulate normalized contributions.
    model.set_train(false);
    const int bands = features.band_count();
    std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
    Tensor<float> x(1, bands, patch, patch);
    for (int y0 : ys) {
        for (int x0 : xs) {
            for (int b = 0; b < bands; ++b) {
                float* plane = x.plane(0, b);
                const auto& src = features.band(b);
                for (int r = 0; r < patch; ++r) {
                    const float* srow =
                        src.data() + static_cast<std::size_t>(y0 + r) * w + x0;
                    for (int c = 0; c < patch; ++c) {
                        const float v = srow[c];
                        plane[static_cast<std::size_t>(r) * patch + c] =
                            std::isnan(v) ? 0.0f : v;
                    }
                }
            }
            Tensor<float> pred = model.forward(x);
            const float* pp = pred.plane(0, 0);
            for (int r = 0; r < patch; ++r) {
                double* arow = acc.data() + static_cast<std::size_t>(y0 + r) * w + x0;
                const double* drow = den.data() + static_cast<std::size_t>(y0 + r) * w + x0;
                const double* wrow = wp.data() + static_cast<std::size_t>(r) * patch;
                for (int c = 0; c < patch; ++c)
                    arow[c] += (wrow[c] / drow[c]) * static_cast<double>(pp[r * patch + c]);
            }
        }
    }

    BandRaster out(features.grid(), {"prediction"});
    auto& band = out.band(0);
    for (std::size_t i = 0; i < band.size(); ++i) band[i] = static_cast<float>(acc[i]);
    return out;
}

MetricReport rmse_mae(const std::vector<float>& pred, const std::vector<float>& target,
                      const std::vector<float>* mask) {
    if (pred.size() != target.size() || (mask && mask->size() != pred.size()))
        throw ValidationError("metric inputs must be the same size");
    double sq = 0.0, ab = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask) {
            const float m = (*mask)[i];
            if (std::isnan(m) || m == 0.0f) continue;
        } else if (std::isnan(pred[i]) || std::isnan(target[i])) {
            continue;
        }
        const double r = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        sq += r * r;
        ab += std::abs(r);
        ++n;
    }
    if (n == 0) throw ValidationError("empty mask in metric evaluation");
    MetricReport rep;
    rep.n = n;
    rep.rmse = std::sqrt(sq / static_cast<double>(n));
    rep.mae = ab / static_cast<double>(n);
    if (rep.rmse < rep.mae * (1.0 - 1e-12))
        throw RuntimeError("power-mean inequality violated: RMSE < MAE");
    return rep;
}

MetricReport cv_from_fold_rmses(const std::vector<double>& fold_rmses) {
    if (fold_rmses.empty()) throw ValidationError("no fold results");
    MetricReport rep;
    rep.n = fold_rmses.size();
    double sum = 0.0;
    for (double v : fold_rmses) sum += v;
    rep.cv_rmse_mean = sum / static_cast<double>(fold_rmses.size());
    double var = 0.0;
    for (double v : fold_rmses) var += (v - rep.cv_rmse_mean) * (v - rep.cv_rmse_mean);
    rep.cv_rmse_std = std::sqrt(var / static_cast<double>(fold_rmses.size()));  // population
    return rep;
}

namespace {

std::vector<Point> circle_ring(double cx, double cy, double radius, int chords) {
    std::vector<Point> ring;
    ring.reserve(static_cast<std::size_t>(chords));
    for (int i = 0; i < chords; ++i) {
        const double a = 2.0 * 3.14159265358979323846 * i / chords;
        ring.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
    }
    return ring;
}

}  // namespace

std::vector<double> plot_footprint_values(const BandRaster& prediction,
                                          const std::vector<PlotRecord>& plots,
                                          double footprint_radius) {
    if (!(footprint_radius > 0.0)) throw ValidationError("footprint radius must be > 0");
    const RasterGrid& grid = prediction.grid();
    const auto& band = prediction.band(0);
    std::vector<double> out(plots.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t pi = 0; pi < plots.size(); ++pi) {
        const auto& plot = plots[pi];
        const auto ring = circle_ring(plot.x, plot.y, footprint_radius, 64);
        const int c0 = std::max(0, static_cast<int>(std::floor(
                                       (plot.x - footprint_radius - grid.origin_x) / grid.cell_size)));
        const int c1 = std::min(grid.width - 1,
                                static_cast<int>(std::floor(
                                    (plot.x + footprint_radius - grid.origin_x) / grid.cell_size)));
        const int r0 = std::max(0, static_cast<int>(std::floor(
                                       (grid.origin_y - plot.y - footprint_radius) / grid.cell_size)));
        const int r1 = std::min(grid.height - 1,
                                static_cast<int>(std::floor(
                                    (grid.origin_y - plot.y + footprint_radius) / grid.cell_size)));
        double wsum = 0.0, vsum = 0.0;
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double min_x = grid.cell_min_x(c);
                const double max_y = grid.cell_max_y(r);
                const auto clipped =
                    clip_to_rect(ring, min_x, max_y - grid.cell_size, min_x + grid.cell_size, max_y);
                if (clipped.size() < 3) continue;
                const double area = std::abs(shoelace_area(clipped));
                if (area <= 0.0) continue;
                const float v = band[static_cast<std::size_t>(r) * grid.width + c];
                if (std::isnan(v)) continue;
                wsum += area;
                vsum += area * static_cast<double>(v);
            }
        }
        if (wsum > 0.0) out[pi] = vsum / wsum;
    }
    return out;
}

MetricReport plot_level_eval(const BandRaster& prediction, const std::vector<PlotRecord>& plots,
                             double footprint_radius) {
    const auto values = plot_footprint_values(prediction, plots, footprint_radius);
    double sq = 0.0, ab = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < plots.size(); ++i) {
        if (std::isnan(values[i])) continue;
        const double r = values[i] - plots[i].value;
        sq += r * r;
        ab += std::abs(r);
        ++n;
    }
    if (n == 0) throw ValidationError("no plot footprint intersects the raster");
    MetricReport rep;
    rep.n = n;
    rep.rmse = std::sqrt(sq / static_cast<double>(n));
    rep.mae = ab / static_cast<double>(n);
    return rep;
}

}  // namespace forestreg
