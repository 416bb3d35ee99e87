#include "forestreg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace forestreg {

namespace {
using nlohmann::json;

bool mask_on(float v) { return !std::isnan(v) && v != 0.0f; }
}  // namespace

std::vector<std::size_t> CvSplit::fold_members(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

std::vector<Superpatch> split_superpatches(int scene_w, int scene_h, int sp_w, int sp_h) {
    if (sp_w < 1 || sp_h < 1) throw ValidationError("superpatch dims must be >= 1");
    if (sp_w > scene_w || sp_h > scene_h)
        throw ValidationError("superpatch larger than scene");
    const int nx = scene_w / sp_w;
    const int ny = scene_h / sp_h;
    std::vector<Superpatch> out;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    for (int by = 0; by < ny; ++by)
        for (int bx = 0; bx < nx; ++bx)
            out.push_back({bx * sp_w, by * sp_h, sp_w, sp_h});
    return out;
}

double superpatch_coverage(const Superpatch& sp, const std::vector<float>& m_pt, int scene_w) {
    std::size_t on = 0;
    for (int y = sp.y0; y < sp.y0 + sp.h; ++y) {
        const float* row = m_pt.data() + static_cast<std::size_t>(y) * scene_w;
        for (int x = sp.x0; x < sp.x0 + sp.w; ++x)
            if (mask_on(row[x])) ++on;
    }
    return static_cast<double>(on) / (static_cast<double>(sp.w) * sp.h);
}

SuperpatchSplit select_test_superpatches(const std::vector<Superpatch>& sps,
                                         const std::vector<float>& m_pt, int scene_w,
                                         double min_overlap, double test_fraction,
                                         std::uint64_t seed) {
    // Scan order is preserved throughout; only the draw is randomized.
    std::vector<std::size_t> remaining, candidates;
    for (std::size_t i = 0; i < sps.size(); ++i) {
        const double cov = superpatch_coverage(sps[i], m_pt, scene_w);
        if (cov <= 0.0) continue;
        remaining.push_back(i);
        if (cov >= min_overlap) candidates.push_back(i);
    }
    if (candidates.empty()) throw ValidationError("no test-candidate superpatches");

    std::size_t n_test =
        static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(remaining.size())));
    SuperpatchSplit out;
    if (n_test > candidates.size()) {
        out.truncated = true;
        n_test = candidates.size();
    }
    out.candidate_count = candidates.size();

    Rng rng(mix_seed(seed, 0x5e1ec7));
    auto drawn = candidates;
    rng.shuffle(drawn);
    drawn.resize(n_test);
    std::sort(drawn.begin(), drawn.end());

    std::size_t d = 0;
    for (std::size_t i : remaining) {
        if (d < drawn.size() && drawn[d] == i) {
            out.test.push_back(sps[i]);
            ++d;
        } else {
            out.train_pool.push_back(sps[i]);
        }
    }
    return out;
}

std::vector<PatchRef> extract_patches(const Superpatch& sp, const std::vector<float>& m_pt,
                                      int scene_w, int size, int stride, bool augment,
                                      PatchRole role) {
    if (sp.w < size || sp.h < size) throw ValidationError("region smaller than patch");
    if (stride < 1) throw ValidationError("stride must be >= 1");
    std::vector<PatchRef> out;
    for (int y = sp.y0; y + size <= sp.y0 + sp.h; y += stride) {
        for (int x = sp.x0; x + size <= sp.x0 + sp.w; x += stride) {
            bool any = false;
            for (int r = y; r < y + size && !any; ++r) {
                const float* row = m_pt.data() + static_cast<std::size_t>(r) * scene_w;
                for (int c = x; c < x + size; ++c)
                    if (mask_on(row[c])) {
                        any = true;
                        break;
                    }
            }
            if (!any) continue;  // no overlap with M_pt
            const int variants = augment ? 8 : 1;
            for (int t = 0; t < variants; ++t) out.push_back({x, y, size, t, role, -1});
        }
    }
    return out;
}

CvSplit cv_folds(std::size_t plot_count, int k, std::uint64_t seed) {
    if (k < 1) throw ValidationError("fold count must be >= 1");
    if (static_cast<std::size_t>(k) > plot_count)
        throw ValidationError("fold count exceeds plot count");
    std::vector<std::size_t> order(plot_count);
    for (std::size_t i = 0; i < plot_count; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0xf01d5));
    rng.shuffle(order);
    CvSplit split;
    split.k = k;
    split.fold_of.assign(plot_count, 0);
    for (std::size_t i = 0; i < plot_count; ++i)
        split.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return split;
}

void apply_dihedral(const float* src, float* dst, int n, int tag) {
    const int rot = tag & 3;
    const bool flip = (tag & 4) != 0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            // Walk the dest coordinate back through rot CCW quarter-turns,
            // then through the optional horizontal mirror.
            int rr = r, cc = c;
            for (int t = 0; t < rot; ++t) {
                const int nr = cc, nc = n - 1 - rr;
                rr = nr;
                cc = nc;
            }
            if (flip) cc = n - 1 - cc;
            dst[r * n + c] = src[rr * n + cc];
        }
    }
}

namespace {

// Copies one band window (NaN -> 0) and writes its dihedral image into a
// tensor plane.
void fill_plane(const std::vector<float>& band, int scene_w, const PatchRef& ref, float* plane,
                std::vector<float>& scratch) {
    const int s = ref.size;
    scratch.resize(static_cast<std::size_t>(s) * s);
    for (int r = 0; r < s; ++r) {
        const float* row = band.data() + static_cast<std::size_t>(ref.y0 + r) * scene_w + ref.x0;
        for (int c = 0; c < s; ++c) {
            const float v = row[c];
            scratch[static_cast<std::size_t>(r) * s + c] = std::isnan(v) ? 0.0f : v;
        }
    }
    apply_dihedral(scratch.data(), plane, s, ref.aug);
}

}  // namespace

PatchSample materialize_patch(const BandRaster& features, const ImputedTargetSet& targets,
                              const PatchRef& ref) {
    const int s = ref.size;
    const int w = features.width(), h = features.height();
    if (targets.target.width() != w || targets.target.height() != h)
        throw ValidationError("feature and target rasters are misaligned");
    if (ref.x0 < 0 || ref.y0 < 0 || ref.x0 + s > w || ref.y0 + s > h)
        throw ValidationError("patch window outside the scene");

    PatchSample out;
    out.aug = ref.aug;
    out.input = Tensor<float>(1, features.band_count(), s, s);
    out.target = Tensor<float>(1, 1, s, s);
    out.m_pt = Tensor<float>(1, 1, s, s);
    out.m_gr = Tensor<float>(1, 1, s, s);

    std::vector<float> scratch;
    for (int b = 0; b < features.band_count(); ++b)
        fill_plane(features.band(b), w, ref, out.input.plane(0, b), scratch);
    fill_plane(targets.target.band(0), w, ref, out.target.plane(0, 0), scratch);
    fill_plane(targets.m_pt.band(0), w, ref, out.m_pt.plane(0, 0), scratch);
    fill_plane(targets.m_gr.band(0), w, ref, out.m_gr.plane(0, 0), scratch);
    return out;
}

void save_patch_manifest(const std::vector<PatchRef>& refs, const std::filesystem::path& path) {
    std::ostringstream os;
    for (const auto& r : refs) {
        json j{{"x0", r.x0},
               {"y0", r.y0},
               {"size", r.size},
               {"aug", r.aug},
               {"role", r.role == PatchRole::Test ? "test" : "train"},
               {"fold", r.fold}};
        os << j.dump() << '\n';
    }
    atomic_write_text(path, os.str());
}

std::vector<PatchRef> load_patch_manifest(const std::filesystem::path& path) {
    std::istringstream is(read_text(path));
    std::vector<PatchRef> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("bad patch manifest line: " + std::string(e.what()));
        }
        PatchRef r;
        r.x0 = j.at("x0").get<int>();
        r.y0 = j.at("y0").get<int>();
        r.size = j.at("size").get<int>();
        r.aug = j.at("aug").get<int>();
        const std::string role = j.at("role").get<std::string>();
        if (role == "test")
            r.role = PatchRole::Test;
        else if (role == "train")
            r.role = PatchRole::Train;
        else
            throw ValidationError("bad patch role: " + role);
        r.fold = j.at("fold").get<int>();
        if (r.size < 1 || r.aug < 0 || r.aug > 7)
            throw ValidationError("bad patch manifest entry");
        out.push_back(r);
    }
    return out;
}

}  // namespace forestreg
