#pragma once

#include <filesystem>
#include <vector>

#include "forestreg/geodata.hpp"
#include "forestreg/sarfeat.hpp"

namespace forestreg {

// Synthetic scene recipe. A smooth latent parameter field drives everything:
// polygon pseudo-targets cover a quantile-thresholded subset of cells (with
// optional bias/noise against the latent truth), plots sample the truth
// exactly at cell centers, and the SAR stack maps the truth through a
// saturating backscatter curve with multiplicative speckle.
struct SynthSpec {
    int width = 256;
    int height = 256;
    double cell_size = 16.0;
    double coverage = 0.6;   // fraction of cells carrying polygons
    int plots = 50;
    int scenes = 4;          // SAR acquisitions in the stack
    double value_max = 660.0;
    int smooth_passes = 6;
    double poly_bias = 0.0;  // additive pseudo-target bias
    double poly_noise = 0.0; // stddev of additive pseudo-target noise
    double speckle = 0.3;    // log-sigma of the multiplicative speckle
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthScene {
    BandRaster truth;                     // band "truth"
    std::vector<PolygonRecord> polygons;  // pseudo-target source
    std::vector<PlotRecord> plots;        // ground samples
    IntensityStack stack;                 // linear dual-pol intensities

    // Writes truth/, polygons.jsonl, plots.csv and sar/scene_XXX/ + stack.json.
    void save(const std::filesystem::path& dir) const;
};

SynthScene generate_scene(const SynthSpec& spec);

}  // namespace forestreg
