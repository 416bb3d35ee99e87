#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forestreg/raster.hpp"

namespace forestreg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// One vector prediction polygon: a closed ring carrying the predicted value
// V_mp and areal coverage A_mp. If area is absent it is computed from the
// ring after clipping to the host cell.
struct PolygonRecord {
    std::string id;
    std::vector<Point> ring;
    double value = 0.0;
    std::optional<double> area;
};

struct PlotRecord {
    double x = 0.0;
    double y = 0.0;
    double value = 0.0;
};

// Signed shoelace area of a ring (positive for counter-clockwise).
double shoelace_area(const std::vector<Point>& ring);

// Sutherland-Hodgman clip of a ring against the axis-aligned rectangle
// [min_x, max_x] x [min_y, max_y].
std::vector<Point> clip_to_rect(const std::vector<Point>& ring, double min_x, double min_y,
                                double max_x, double max_y);

struct MergedCell {
    double value = 0.0;  // V_merged
    double area = 0.0;   // A_merged, m^2
    int count = 0;       // number of merged polygons
};

// Per-cell merge results keyed by row * width + col. std::map keeps
// iteration order deterministic for the conservation sums.
struct MergedCellTable {
    std::map<std::int64_t, MergedCell> cells;

    std::int64_t key(const RasterGrid& grid, int row, int col) const {
        return static_cast<std::int64_t>(row) * grid.width + col;
    }
    double total_value() const;
    double total_area() const;
};

struct RejectedRecord {
    std::string id;
    std::string reason;
};

struct MergeResult {
    MergedCellTable table;
    std::vector<RejectedRecord> rejected;
    double accepted_value_sum = 0.0;
    double accepted_area_sum = 0.0;
};

// Merges per-cell polygon predictions: V_merged and A_merged are plain sums
// over the polygons intersecting a cell. Each polygon must lie within one
// grid cell; vertices may stray up to 1e-6 * cell_size outside (healed by
// rectangle clipping). Polygons spanning further, or with degenerate rings,
// are rejected with a diagnostic.
MergeResult merge_multipolygons(const std::vector<PolygonRecord>& records, const RasterGrid& grid);

// Imputed target map plus the two ancillary masks. Masks hold {0,1}.
// m_gr == 1 implies the target pixel is a ground-reference value;
// pixels with both masks zero are nodata.
struct ImputedTargetSet {
    BandRaster target;
    BandRaster m_pt;
    BandRaster m_gr;

    void save(const std::filesystem::path& dir) const;
    static ImputedTargetSet load(const std::filesystem::path& dir);

    // Fraction of pixels with m_pt == 1.
    double pseudo_coverage() const;
};

// Drops cells whose areal coverage A_merged / cell_area is strictly below
// threshold (ties kept); surviving cells carry V_merged and m_pt = 1.
// With density_normalize the stored value is rescaled by cell_area/A_merged.
ImputedTargetSet coverage_filter(const MergedCellTable& table, const RasterGrid& grid,
                                 double threshold = 0.40, bool density_normalize = false);

struct ImputeStats {
    int imputed_cells = 0;
    int shared_cell_warnings = 0;
    int skipped_outside = 0;
};

// Inserts true targets into the pseudo-target map: the containing cell gets
// the plot value (mean if several plots share a cell), m_gr = 1 and
// m_pt = 1. Plots outside the grid are skipped and counted.
ImputeStats impute_true_targets(ImputedTargetSet& set, const std::vector<PlotRecord>& plots);

// JSON-lines polygon file: {"id": ..., "ring": [[x,y],...], "value": ...,
// "area": ...} with area optional.
std::vector<PolygonRecord> load_polygons_jsonl(const std::filesystem::path& path);
void save_polygons_jsonl(const std::vector<PolygonRecord>& records,
                         const std::filesystem::path& path);

// Plot CSV with header x,y,value.
std::vector<PlotRecord> load_plots_csv(const std::filesystem::path& path);
void save_plots_csv(const std::vector<PlotRecord>& plots, const std::filesystem::path& path);

}  // namespace forestreg
