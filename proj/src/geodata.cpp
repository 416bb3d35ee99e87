#include "forestreg/geodata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace forestreg {

using nlohmann::json;

double shoelace_area(const std::vector<Point>& ring) {
    double acc = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

namespace {

enum class Edge { Left, Right, Bottom, Top };

bool inside(const Point& p, Edge e, double lim) {
    switch (e) {
        case Edge::Left: return p.x >= lim;
        case Edge::Right: return p.x <= lim;
        case Edge::Bottom: return p.y >= lim;
        case Edge::Top: return p.y <= lim;
    }
    return false;
}

Point intersect(const Point& a, const Point& b, Edge e, double lim) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    double t;
    if (e == Edge::Left || e == Edge::Right) {
        t = (lim - a.x) / dx;
        return {lim, a.y + t * dy};
    }
    t = (lim - a.y) / dy;
    return {a.x + t * dx, lim};
}

std::vector<Point> clip_edge(const std::vector<Point>& ring, Edge e, double lim) {
    std::vector<Point> out;
    const std::size_t n = ring.size();
    out.reserve(n + 2);
    for (std::size_t i = 0; i < n; ++i) {
        const Point& cur = ring[i];
        const Point& prev = ring[(i + n - 1) % n];
        const bool cur_in = inside(cur, e, lim);
        const bool prev_in = inside(prev, e, lim);
        if (cur_in) {
            if (!prev_in) out.push_back(intersect(prev, cur, e, lim));
            out.push_back(cur);
        } else if (prev_in) {
            out.push_back(intersect(prev, cur, e, lim));
        }
    }
    return out;
}

// Ring with an explicit closing vertex dropped, if present.
std::vector<Point> open_ring(const std::vector<Point>& ring) {
    std::vector<Point> r = ring;
    if (r.size() >= 2 && r.front().x == r.back().x && r.front().y == r.back().y) r.pop_back();
    return r;
}

int distinct_vertices(const std::vector<Point>& ring) {
    int n = 0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        bool dup = false;
        for (std::size_t j = 0; j < i; ++j) {
            if (ring[i].x == ring[j].x && ring[i].y == ring[j].y) {
                dup = true;
                break;
            }
        }
        if (!dup) ++n;
    }
    return n;
}

}  // namespace

std::vector<Point> clip_to_rect(const std::vector<Point>& ring, double min_x, double min_y,
                                double max_x, double max_y) {
    std::vector<Point> r = clip_edge(ring, Edge::Left, min_x);
    if (r.empty()) return r;
    r = clip_edge(r, Edge::Right, max_x);
    if (r.empty()) return r;
    r = clip_edge(r, Edge::Bottom, min_y);
    if (r.empty()) return r;
    return clip_edge(r, Edge::Top, max_y);
}

double MergedCellTable::total_value() const {
    double s = 0.0;
    for (const auto& [k, c] : cells) s += c.value;
    return s;
}

double MergedCellTable::total_area() const {
    double s = 0.0;
    for (const auto& [k, c] : cells) s += c.area;
    return s;
}

MergeResult merge_multipolygons(const std::vector<PolygonRecord>& records, const RasterGrid& grid) {
    grid.validate();
    MergeResult result;
    const double tol = 1e-6 * grid.cell_size;

    for (const auto& rec : records) {
        std::vector<Point> ring = open_ring(rec.ring);
        if (distinct_vertices(ring) < 3) {
            result.rejected.push_back({rec.id, "degenerate ring (<3 distinct vertices)"});
            continue;
        }
        const double ring_area = std::abs(shoelace_area(ring));
        if (!(ring_area > 0.0)) {
            result.rejected.push_back({rec.id, "zero-area ring"});
            continue;
        }

        // Host cell from the ring centroid.
        double cx = 0.0, cy = 0.0;
        for (const Point& p : ring) {
            cx += p.x;
            cy += p.y;
        }
        cx /= static_cast<double>(ring.size());
        cy /= static_cast<double>(ring.size());
        if (!grid.contains(cx, cy)) {
            result.rejected.push_back({rec.id, "centroid outside grid"});
            continue;
        }
        const int col = grid.col_of(cx);
        const int row = grid.row_of(cy);
        const double min_x = grid.cell_min_x(col);
        const double max_x = min_x + grid.cell_size;
        const double max_y = grid.cell_max_y(row);
        const double min_y = max_y - grid.cell_size;

        bool spans = false;
        for (const Point& p : ring) {
            if (p.x < min_x - tol || p.x > max_x + tol || p.y < min_y - tol || p.y > max_y + tol) {
                spans = true;
                break;
            }
        }
        if (spans) {
            result.rejected.push_back({rec.id, "polygon spans more than one grid cell"});
            continue;
        }

        const std::vector<Point> clipped = clip_to_rect(ring, min_x, min_y, max_x, max_y);
        const double clipped_area = std::abs(shoelace_area(clipped));

        double area;
        if (rec.area.has_value()) {
            area = *rec.area;
            if (!(area > 0.0) ||
                std::abs(area - ring_area) > 1e-6 * std::max(std::abs(area), ring_area)) {
                result.rejected.push_back({rec.id, "stored area disagrees with ring shoelace"});
                continue;
            }
        } else {
            area = clipped_area;
        }

        MergedCell& cell = result.table.cells[result.table.key(grid, row, col)];
        cell.value += rec.value;
        cell.area += area;
        cell.count += 1;
        result.accepted_value_sum += rec.value;
        result.accepted_area_sum += area;
    }

    const double max_area = grid.cell_area() * (1.0 + 1e-6);
    for (const auto& [k, c] : result.table.cells) {
        if (c.area > max_area) {
            throw ValidationError("merged area " + std::to_string(c.area) + " exceeds cell area at key " +
                                  std::to_string(k) + " (overlapping polygons?)");
        }
    }
    return result;
}

ImputedTargetSet coverage_filter(const MergedCellTable& table, const RasterGrid& grid,
                                 double threshold, bool density_normalize) {
    grid.validate();
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ValidationError("coverage threshold must be in (0, 1]");
    ImputedTargetSet set{BandRaster(grid, {"target"}, kNoData), BandRaster(grid, {"m_pt"}, 0.0f),
                         BandRaster(grid, {"m_gr"}, 0.0f)};
    const double cell_area = grid.cell_area();
    for (const auto& [key, cell] : table.cells) {
        if (cell.area / cell_area < threshold) continue;
        const int row = static_cast<int>(key / grid.width);
        const int col = static_cast<int>(key % grid.width);
        double v = cell.value;
        if (density_normalize) v *= cell_area / cell.area;
        set.target.at(0, row, col) = static_cast<float>(v);
        set.m_pt.at(0, row, col) = 1.0f;
    }
    return set;
}

ImputeStats impute_true_targets(ImputedTargetSet& set, const std::vector<PlotRecord>& plots) {
    const RasterGrid& grid = set.target.grid();
    ImputeStats stats;
    std::map<std::int64_t, std::pair<double, int>> per_cell;  // sum, count
    for (const auto& plot : plots) {
        if (!grid.contains(plot.x, plot.y)) {
            ++stats.skipped_outside;
            continue;
        }
        const std::int64_t key =
            static_cast<std::int64_t>(grid.row_of(plot.y)) * grid.width + grid.col_of(plot.x);
        auto& [sum, count] = per_cell[key];
        sum += plot.value;
        ++count;
    }
    for (const auto& [key, agg] : per_cell) {
        const int row = static_cast<int>(key / grid.width);
        const int col = static_cast<int>(key % grid.width);
        set.target.at(0, row, col) = static_cast<float>(agg.first / agg.second);
        set.m_gr.at(0, row, col) = 1.0f;
        set.m_pt.at(0, row, col) = 1.0f;
        ++stats.imputed_cells;
        if (agg.second > 1) ++stats.shared_cell_warnings;
    }
    return stats;
}

void ImputedTargetSet::save(const std::filesystem::path& dir) const {
    BandRaster out(target.grid(), {"target", "m_pt", "m_gr"});
    out.band(0) = target.band(0);
    out.band(1) = m_pt.band(0);
    out.band(2) = m_gr.band(0);
    out.save(dir);
}

ImputedTargetSet ImputedTargetSet::load(const std::filesystem::path& dir) {
    BandRaster in = BandRaster::load(dir);
    if (in.band_count() != 3)
        throw ValidationError("imputed target set expects 3 bands in " + dir.string());
    ImputedTargetSet set{BandRaster(in.grid(), {"target"}), BandRaster(in.grid(), {"m_pt"}, 0.0f),
                         BandRaster(in.grid(), {"m_gr"}, 0.0f)};
    set.target.band(0) = in.band(in.band_index("target"));
    set.m_pt.band(0) = in.band(in.band_index("m_pt"));
    set.m_gr.band(0) = in.band(in.band_index("m_gr"));
    return set;
}

double ImputedTargetSet::pseudo_coverage() const {
    const auto& mask = m_pt.band(0);
    std::size_t ones = 0;
    for (float v : mask) ones += (v == 1.0f);
    return static_cast<double>(ones) / static_cast<double>(mask.size());
}

std::vector<PolygonRecord> load_polygons_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw RuntimeError("cannot open: " + path.string());
    std::vector<PolygonRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            PolygonRecord rec;
            rec.id = j.at("id").get<std::string>();
            for (const auto& xy : j.at("ring")) {
                rec.ring.push_back({xy.at(0).get<double>(), xy.at(1).get<double>()});
            }
            rec.value = j.at("value").get<double>();
            if (j.contains("area")) rec.area = j.at("area").get<double>();
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad polygon record: " + e.what());
        }
    }
    return records;
}

void save_polygons_jsonl(const std::vector<PolygonRecord>& records,
                         const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        json ring = json::array();
        for (const Point& p : rec.ring) ring.push_back({p.x, p.y});
        j["ring"] = ring;
        j["value"] = rec.value;
        if (rec.area.has_value()) j["area"] = *rec.area;
        out << j.dump() << "\n";
    }
    atomic_write_text(path, out.str());
}

std::vector<PlotRecord> load_plots_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw RuntimeError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ValidationError("empty plot CSV: " + path.string());
    std::vector<PlotRecord> plots;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string fx, fy, fv;
        if (!std::getline(ss, fx, ',') || !std::getline(ss, fy, ',') || !std::getline(ss, fv)) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad plot row");
        }
        PlotRecord p{std::stod(fx), std::stod(fy), std::stod(fv)};
        if (p.value < 0.0)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": negative plot value");
        plots.push_back(p);
    }
    return plots;
}

void save_plots_csv(const std::vector<PlotRecord>& plots, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "x,y,value\n";
    out.precision(17);
    for (const auto& p : plots) out << p.x << "," << p.y << "," << p.value << "\n";
    atomic_write_text(path, out.str());
}

}  // namespace forestreg
