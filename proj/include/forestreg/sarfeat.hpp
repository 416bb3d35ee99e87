#pragma once

#include <filesystem>
#include <vector>

#include "forestreg/raster.hpp"

namespace forestreg {

enum class IntensityScale { Linear, Decibel };

// Temporal stack of dual-pol scenes on a common grid. Each scene is a
// 2-band raster ordered [VV, VH].
struct IntensityStack {
    std::vector<BandRaster> scenes;
    IntensityScale scale = IntensityScale::Linear;

    void validate() const;
};

// 10*log10 per pixel. Zeros map to nodata, negatives are an error.
BandRaster to_decibel(const BandRaster& linear);

// Inverse of to_decibel.
BandRaster to_linear(const BandRaster& decibel);

// Normalised difference index (VV-VH)/(VV+VH) on linear intensities.
// Pixels with a non-positive denominator become nodata.
std::vector<float> ndi(const std::vector<float>& vv, const std::vector<float>& vh);

// Nine-band feature raster:
//   [ndi, mean_vv, mean_vh, min_vv, min_vh, max_vv, max_vh, median_vv, median_vh]
// Statistics are computed per pixel on dB values; the NDI comes from the
// temporal mean of the linear intensities. Even-count medians average the
// two middle values. A pixel is nodata if any scene is nodata there.
BandRaster temporal_stats(const IntensityStack& stack);

// Three-band single-scene features [vv_db, vh_db, ndi].
BandRaster single_scene_features(const BandRaster& scene, IntensityScale scale);

// On-disk stack layout: dir/stack.json ({"scale", "scenes"}) plus one
// BandRaster directory per scene (scene_000, scene_001, ...).
void save_intensity_stack(const IntensityStack& stack, const std::filesystem::path& dir);
IntensityStack load_intensity_stack(const std::filesystem::path& dir);

}  // namespace forestreg
