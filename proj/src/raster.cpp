#include "forestreg/raster.hpp"

#include <json.hpp>

namespace forestreg {

using nlohmann::json;

BandRaster::BandRaster(RasterGrid grid, std::vector<std::string> band_names, float fill)
    : grid_(grid), names_(std::move(band_names)) {
    grid_.validate();
    if (names_.empty()) throw ValidationError("raster needs at least one band");
    bands_.assign(names_.size(),
                  std::vector<float>(static_cast<std::size_t>(grid_.width) * grid_.height, fill));
}

int BandRaster::band_index(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    throw ValidationError("no band named '" + name + "'");
}

namespace {
std::string band_file_name(int idx) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "band_%03d.f32", idx);
    return buf;
}
}  // namespace

void BandRaster::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json header;
    header["width"] = grid_.width;
    header["height"] = grid_.height;
    header["origin_x"] = grid_.origin_x;
    header["origin_y"] = grid_.origin_y;
    header["cell_size"] = grid_.cell_size;
    header["band_count"] = band_count();
    header["band_names"] = names_;
    header["nodata"] = "nan";
    atomic_write_text(dir / "header.json", header.dump(2) + "\n");
    for (int b = 0; b < band_count(); ++b) {
        auto copy = bands_[static_cast<std::size_t>(b)];
        write_f32_le(copy, dir / band_file_name(b));
    }
}

BandRaster BandRaster::load(const std::filesystem::path& dir) {
    json header;
    try {
        header = json::parse(read_text(dir / "header.json"));
    } catch (const json::exception& e) {
        throw ValidationError("malformed raster header in " + dir.string() + ": " + e.what());
    }
    BandRaster r;
    try {
        r.grid_.width = header.at("width").get<int>();
        r.grid_.height = header.at("height").get<int>();
        r.grid_.origin_x = header.at("origin_x").get<double>();
        r.grid_.origin_y = header.at("origin_y").get<double>();
        r.grid_.cell_size = header.at("cell_size").get<double>();
        r.names_ = header.at("band_names").get<std::vector<std::string>>();
        const int count = header.at("band_count").get<int>();
        if (count != static_cast<int>(r.names_.size()))
            throw ValidationError("band_count disagrees with band_names in " + dir.string());
        if (header.at("nodata").get<std::string>() != "nan")
            throw ValidationError("unsupported nodata value in " + dir.string());
    } catch (const json::exception& e) {
        throw ValidationError("invalid raster header in " + dir.string() + ": " + e.what());
    }
    r.grid_.validate();
    const auto pixels = static_cast<std::size_t>(r.grid_.width) * r.grid_.height;
    for (std::size_t b = 0; b < r.names_.size(); ++b) {
        r.bands_.push_back(read_f32_le(dir / band_file_name(static_cast<int>(b)), pixels));
    }
    return r;
}

}  // namespace forestreg
