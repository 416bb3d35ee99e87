#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forestreg/geodata.hpp"
#include "forestreg/raster.hpp"
#include "forestreg/rng.hpp"
#include "forestreg/tensor.hpp"

namespace forestreg {

// Non-overlapping scene block; the unit of train/test splitting.
struct Superpatch {
    int x0 = 0, y0 = 0, w = 0, h = 0;

    bool operator==(const Superpatch&) const = default;
};

enum class PatchRole { Train, Test };

// Window into the scene stack plus a dihedral augmentation tag.
// tag = rot + 4*flip; rot = quarter-turns CCW applied after an optional
// horizontal mirror. Pixels are materialized lazily from the rasters.
struct PatchRef {
    int x0 = 0, y0 = 0, size = 64;
    int aug = 0;
    PatchRole role = PatchRole::Train;
    int fold = -1;
};

struct PatchSample {
    Tensor<float> input;   // C x s x s
    Tensor<float> target;  // 1 x s x s
    Tensor<float> m_pt;    // 1 x s x s, binary
    Tensor<float> m_gr;    // 1 x s x s, binary
    int aug = 0;
};

struct CvSplit {
    int k = 0;
    std::vector<int> fold_of;  // per plot index, in [0, k)

    std::vector<std::size_t> fold_members(int fold) const;
};

struct SuperpatchSplit {
    std::vector<Superpatch> test;
    std::vector<Superpatch> train_pool;
    std::size_t candidate_count = 0;
    bool truncated = false;  // fewer candidates than the requested draw
};

std::vector<Superpatch> split_superpatches(int scene_w, int scene_h, int sp_w, int sp_h);

// Coverage = fraction of window pixels with m_pt == 1.
double superpatch_coverage(const Superpatch& sp, const std::vector<float>& m_pt, int scene_w);

// Removes zero-overlap superpatches, draws ceil(test_fraction * remaining)
// test superpatches from the >= min_overlap candidates (seeded), and returns
// the rest as the train pool.
SuperpatchSplit select_test_superpatches(const std::vector<Superpatch>& sps,
                                         const std::vector<float>& m_pt, int scene_w,
                                         double min_overlap, double test_fraction,
                                         std::uint64_t seed);

// Stride-`stride` windows inside the superpatch; windows whose m_pt plane is
// all zero are discarded; augment=true emits all 8 dihedral variants.
std::vector<PatchRef> extract_patches(const Superpatch& sp, const std::vector<float>& m_pt,
                                      int scene_w, int size, int stride, bool augment,
                                      PatchRole role);

// Seeded partition of plot indices into k folds with sizes differing by <= 1.
CvSplit cv_folds(std::size_t plot_count, int k, std::uint64_t seed);

// In-place dihedral transform of a square n x n plane per the PatchRef tag.
void apply_dihedral(const float* src, float* dst, int n, int tag);

PatchSample materialize_patch(const BandRaster& features, const ImputedTargetSet& targets,
                              const PatchRef& ref);

// JSONL manifest: one object per patch (window coords, aug, role, fold).
void save_patch_manifest(const std::vector<PatchRef>& refs, const std::filesystem::path& path);
std::vector<PatchRef> load_patch_manifest(const std::filesystem::path& path);

}  // namespace forestreg
