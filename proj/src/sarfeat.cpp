#include "forestreg/sarfeat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace forestreg {

void IntensityStack::validate() const {
    if (scenes.empty()) throw ValidationError("intensity stack is empty");
    const RasterGrid& g = scenes.front().grid();
    for (const auto& s : scenes) {
        if (s.band_count() != 2)
            throw ValidationError("intensity scenes must have 2 bands (VV, VH)");
        if (s.grid().width != g.width || s.grid().height != g.height)
            throw ValidationError("intensity scenes must share grid dimensions");
    }
}

BandRaster to_decibel(const BandRaster& linear) {
    BandRaster out(linear.grid(), linear.band_names());
    for (int b = 0; b < linear.band_count(); ++b) {
        const auto& in = linear.band(b);
        auto& dst = out.band(b);
        for (std::size_t i = 0; i < in.size(); ++i) {
            const float v = in[i];
            if (is_nodata(v)) {
                dst[i] = kNoData;
            } else if (v < 0.0f) {
                throw ValidationError("negative intensity in to_decibel");
            } else if (v == 0.0f) {
                dst[i] = kNoData;
            } else {
                dst[i] = 10.0f * std::log10(v);
            }
        }
    }
    return out;
}

BandRaster to_linear(const BandRaster& decibel) {
    BandRaster out(decibel.grid(), decibel.band_names());
    for (int b = 0; b < decibel.band_count(); ++b) {
        const auto& in = decibel.band(b);
        auto& dst = out.band(b);
        for (std::size_t i = 0; i < in.size(); ++i) {
            dst[i] = is_nodata(in[i]) ? kNoData : std::pow(10.0f, in[i] / 10.0f);
        }
    }
    return out;
}

std::vector<float> ndi(const std::vector<float>& vv, const std::vector<float>& vh) {
    if (vv.size() != vh.size()) throw ValidationError("ndi: band size mismatch");
    std::vector<float> out(vv.size(), kNoData);
    for (std::size_t i = 0; i < vv.size(); ++i) {
        if (is_nodata(vv[i]) || is_nodata(vh[i])) continue;
        const double denom = static_cast<double>(vv[i]) + vh[i];
        if (!(denom > 0.0)) continue;
        out[i] = static_cast<float>((vv[i] - vh[i]) / denom);
    }
    return out;
}

namespace {

const std::vector<std::string> kFeatureNames = {"ndi",    "mean_vv", "mean_vh",
                                                "min_vv", "min_vh",  "max_vv",
                                                "max_vh", "median_vv", "median_vh"};

float median_of(std::vector<float>& vals) {
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    if (n % 2 == 1) return vals[n / 2];
    return 0.5f * (vals[n / 2 - 1] + vals[n / 2]);
}

}  // namespace

BandRaster temporal_stats(const IntensityStack& stack) {
    stack.validate();
    const RasterGrid& grid = stack.scenes.front().grid();
    const std::size_t pixels = static_cast<std::size_t>(grid.width) * grid.height;
    const std::size_t k = stack.scenes.size();

    // Per-scene dB and linear views of both polarisations.
    std::vector<const std::vector<float>*> db_vv(k), db_vh(k), lin_vv(k), lin_vh(k);
    std::vector<BandRaster> converted;
    converted.reserve(2 * k);
    for (std::size_t s = 0; s < k; ++s) {
        const BandRaster& scene = stack.scenes[s];
        if (stack.scale == IntensityScale::Linear) {
            converted.push_back(to_decibel(scene));
            const BandRaster& db = converted.back();
            db_vv[s] = &db.band(0);
            db_vh[s] = &db.band(1);
            lin_vv[s] = &scene.band(0);
            lin_vh[s] = &scene.band(1);
        } else {
            converted.push_back(to_linear(scene));
            const BandRaster& lin = converted.back();
            db_vv[s] = &scene.band(0);
            db_vh[s] = &scene.band(1);
            lin_vv[s] = &lin.band(0);
            lin_vh[s] = &lin.band(1);
        }
    }

    BandRaster out(grid, kFeatureNames);
    std::vector<float> vv_vals(k), vh_vals(k);
    for (std::size_t i = 0; i < pixels; ++i) {
        bool valid = true;
        double lin_vv_sum = 0.0, lin_vh_sum = 0.0;
        double vv_sum = 0.0, vh_sum = 0.0;
        float vv_min = 0, vv_max = 0, vh_min = 0, vh_max = 0;
        for (std::size_t s = 0; s < k && valid; ++s) {
            const float dvv = (*db_vv[s])[i];
            const float dvh = (*db_vh[s])[i];
            if (is_nodata(dvv) || is_nodata(dvh)) {
                valid = false;
                break;
            }
            vv_vals[s] = dvv;
            vh_vals[s] = dvh;
            vv_sum += dvv;
            vh_sum += dvh;
            lin_vv_sum += (*lin_vv[s])[i];
            lin_vh_sum += (*lin_vh[s])[i];
            if (s == 0) {
                vv_min = vv_max = dvv;
                vh_min = vh_max = dvh;
            } else {
                vv_min = std::min(vv_min, dvv);
                vv_max = std::max(vv_max, dvv);
                vh_min = std::min(vh_min, dvh);
                vh_max = std::max(vh_max, dvh);
            }
        }
        if (!valid) continue;  // bands already initialised to nodata
        const double mvv = lin_vv_sum / static_cast<double>(k);
        const double mvh = lin_vh_sum / static_cast<double>(k);
        if (mvv + mvh > 0.0)
            out.band(0)[i] = static_cast<float>((mvv - mvh) / (mvv + mvh));
        out.band(1)[i] = static_cast<float>(vv_sum / static_cast<double>(k));
        out.band(2)[i] = static_cast<float>(vh_sum / static_cast<double>(k));
        out.band(3)[i] = vv_min;
        out.band(4)[i] = vh_min;
        out.band(5)[i] = vv_max;
        out.band(6)[i] = vh_max;
        auto vv_copy = vv_vals;
        auto vh_copy = vh_vals;
        out.band(7)[i] = median_of(vv_copy);
        out.band(8)[i] = median_of(vh_copy);
    }
    return out;
}

BandRaster single_scene_features(const BandRaster& scene, IntensityScale scale) {
    if (scene.band_count() != 2) throw ValidationError("expected 2-band (VV, VH) scene");
    BandRaster db = scale == IntensityScale::Linear ? to_decibel(scene) : scene;
    BandRaster lin = scale == IntensityScale::Linear ? scene : to_linear(scene);
    BandRaster out(scene.grid(), {"vv_db", "vh_db", "ndi"});
    out.band(0) = db.band(0);
    out.band(1) = db.band(1);
    out.band(2) = ndi(lin.band(0), lin.band(1));
    return out;
}

void save_intensity_stack(const IntensityStack& stack, const std::filesystem::path& dir) {
    stack.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json j{
        {"scale", stack.scale == IntensityScale::Linear ? "linear" : "decibel"},
        {"scenes", stack.scenes.size()}};
    atomic_write_text(dir / "stack.json", j.dump(2) + "\n");
    char name[32];
    for (std::size_t i = 0; i < stack.scenes.size(); ++i) {
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        stack.scenes[i].save(dir / name);
    }
}

IntensityStack load_intensity_stack(const std::filesystem::path& dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(dir / "stack.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad stack.json: " + std::string(e.what()));
    }
    IntensityStack stack;
    const std::string scale = j.value("scale", std::string("linear"));
    if (scale == "linear")
        stack.scale = IntensityScale::Linear;
    else if (scale == "decibel")
        stack.scale = IntensityScale::Decibel;
    else
        throw ValidationError("unknown intensity scale: " + scale);
    const std::size_t count = j.value("scenes", std::size_t{0});
    char name[32];
    for (std::size_t i = 0; i < count; ++i) {
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        stack.scenes.push_back(BandRaster::load(dir / name));
    }
    stack.validate();
    return stack;
}

}  // namespace forestreg
