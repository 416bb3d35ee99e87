#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "forestreg/common.hpp"

namespace forestreg {

// Axis-aligned square-cell grid in projected coordinates. (origin_x,
// origin_y) is the top-left corner; rows grow southward (decreasing y),
// columns grow eastward. Cell (col i, row j) covers
//   x in [origin_x + i*s, origin_x + (i+1)*s)
//   y in (origin_y - (j+1)*s, origin_y - j*s].
struct RasterGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 1.0;
    int width = 0;
    int height = 0;

    void validate() const {
        if (!(cell_size > 0.0)) throw ValidationError("grid cell_size must be > 0");
        if (width < 1 || height < 1) throw ValidationError("grid dims must be >= 1");
    }

    double cell_area() const { return cell_size * cell_size; }

    bool contains(double x, double y) const {
        return x >= origin_x && x < origin_x + width * cell_size && y <= origin_y &&
               y > origin_y - height * cell_size;
    }

    // Column/row of the cell containing (x, y); caller checks contains().
    int col_of(double x) const { return static_cast<int>(std::floor((x - origin_x) / cell_size)); }
    int row_of(double y) const { return static_cast<int>(std::floor((origin_y - y) / cell_size)); }

    double cell_min_x(int col) const { return origin_x + col * cell_size; }
    double cell_max_y(int row) const { return origin_y - row * cell_size; }

    bool operator==(const RasterGrid&) const = default;
};

constexpr float kNoData = std::numeric_limits<float>::quiet_NaN();

inline bool is_nodata(float v) { return std::isnan(v); }

// Multi-band float raster on a RasterGrid. Band data is row-major from the
// top-left. Nodata is NaN. On disk: a directory with header.json plus one
// raw little-endian float32 file per band (band_000.f32, ...).
class BandRaster {
public:
    BandRaster() = default;
    BandRaster(RasterGrid grid, std::vector<std::string> band_names, float fill = kNoData);

    const RasterGrid& grid() const { return grid_; }
    int width() const { return grid_.width; }
    int height() const { return grid_.height; }
    int band_count() const { return static_cast<int>(bands_.size()); }
    const std::vector<std::string>& band_names() const { return names_; }

    int band_index(const std::string& name) const;

    std::vector<float>& band(int b) { return bands_[static_cast<std::size_t>(b)]; }
    const std::vector<float>& band(int b) const { return bands_[static_cast<std::size_t>(b)]; }

    float& at(int b, int row, int col) {
        return bands_[static_cast<std::size_t>(b)][static_cast<std::size_t>(row) * grid_.width + col];
    }
    float at(int b, int row, int col) const {
        return bands_[static_cast<std::size_t>(b)][static_cast<std::size_t>(row) * grid_.width + col];
    }

    void save(const std::filesystem::path& dir) const;
    static BandRaster load(const std::filesystem::path& dir);

private:
    RasterGrid grid_;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> bands_;
};

}  // namespace forestreg
