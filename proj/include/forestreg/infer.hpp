#pragma once

#include <vector>

#include "forestreg/generator.hpp"
#include "forestreg/geodata.hpp"
#include "forestreg/raster.hpp"

namespace forestreg {

// p-norm patch blending: per-patch separable linear ramps (eps floor at the
// borders), combined as normalized p-th powers.
struct BlendSpec {
    double p = 5.0;
    double eps = 1e-6;

    void validate() const {
        if (p < 1.0) throw ValidationError("blend p must be >= 1");
        if (!(eps > 0.0)) throw ValidationError("blend eps must be > 0");
    }
};

struct MetricReport {
    double rmse = 0.0;
    double mae = 0.0;
    double cv_rmse_mean = 0.0;
    double cv_rmse_std = 0.0;
    std::size_t n = 0;
};

// Ramp weight of pixel i in a patch of size n: linear from 1/ceil(n/2) at
// the border to 1 at the center.
double ramp_weight(int i, int n);

// Patch windows covering [0, scene) with the given stride; the last window
// is re-anchored flush to the boundary.
std::vector<int> window_starts(int scene, int patch, int stride);

// Wall-to-wall prediction: stride-32 64x64 patches through the generator in
// eval mode, mosaicked with p-norm blended weights. Output band "prediction".
BandRaster predict_scene(GeneratorNet<float>& model, const BandRaster& features,
                         const BlendSpec& blend, int patch = 64, int stride = 32);

// RMSE / MAE over pixels where mask is nonzero (mask may be null = all
// finite pixels). Asserts RMSE >= MAE.
MetricReport rmse_mae(const std::vector<float>& pred, const std::vector<float>& target,
                      const std::vector<float>* mask = nullptr);

// CV-RMSE summary over per-fold RMSEs: mean and population std dev.
MetricReport cv_from_fold_rmses(const std::vector<double>& fold_rmses);

// Area-weighted plot-footprint evaluation: each plot's prediction is the
// mean of intersected cells weighted by circle/cell overlap area (circle
// polygonized with 64 chords).
MetricReport plot_level_eval(const BandRaster& prediction, const std::vector<PlotRecord>& plots,
                             double footprint_radius);

// Per-plot predicted values under the same footprint weighting (NaN when the
// footprint has no valid cells).
std::vector<double> plot_footprint_values(const BandRaster& prediction,
                                          const std::vector<PlotRecord>& plots,
                                          double footprint_radius);

}  // namespace forestreg
