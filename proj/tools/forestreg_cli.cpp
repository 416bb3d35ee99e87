// forestreg command-line tool: wires the library modules into the
// prepare -> train -> infer workflow. Exit codes: 0 ok, 2 usage,
// 3 validation, 4 runtime. All logs to stderr; data goes to files.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "forestreg/dataset.hpp"
#include "forestreg/geodata.hpp"
#include "forestreg/gradcheck.hpp"
#include "forestreg/infer.hpp"
#include "forestreg/sarfeat.hpp"
#include "forestreg/synthgen.hpp"
#include "forestreg/train.hpp"

namespace fr = forestreg;
using nlohmann::json;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

json metric_json(const fr::MetricReport& m) {
    return json{{"rmse", m.rmse},
                {"mae", m.mae},
                {"cv_rmse_mean", m.cv_rmse_mean},
                {"cv_rmse_std", m.cv_rmse_std},
                {"n", m.n}};
}

struct SynthArgs {
    std::string out;
    fr::SynthSpec spec;
};

void run_synth(const SynthArgs& a) {
    const fr::SynthScene scene = fr::generate_scene(a.spec);
    scene.save(a.out);
    log_line("synth: wrote " + a.out + " (" + std::to_string(scene.polygons.size()) +
             " polygons, " + std::to_string(scene.plots.size()) + " plots, " +
             std::to_string(scene.stack.scenes.size()) + " SAR scenes)");
}

struct PrepareTargetsArgs {
    std::string polygons, grid_from, out, plots;
    double threshold = 0.40;
    bool density_normalize = false;
};

void run_prepare_targets(const PrepareTargetsArgs& a) {
    const fr::BandRaster ref = fr::BandRaster::load(a.grid_from);
    const auto polys = fr::load_polygons_jsonl(a.polygons);
    const fr::MergeResult merged = fr::merge_multipolygons(polys, ref.grid());
    for (const auto& rej : merged.rejected)
        log_line("prepare-targets: rejected " + rej.id + ": " + rej.reason);
    fr::ImputedTargetSet set =
        fr::coverage_filter(merged.table, ref.grid(), a.threshold, a.density_normalize);
    if (!a.plots.empty()) {
        const auto plots = fr::load_plots_csv(a.plots);
        const fr::ImputeStats st = fr::impute_true_targets(set, plots);
        log_line("prepare-targets: imputed " + std::to_string(st.imputed_cells) +
                 " ground cells (" + std::to_string(st.shared_cell_warnings) +
                 " shared, " + std::to_string(st.skipped_outside) + " outside)");
    }
    set.save(a.out);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "prepare-targets: %zu cells merged, value sum %.6g, pseudo coverage %.4f",
                  merged.table.cells.size(), merged.accepted_value_sum, set.pseudo_coverage());
    log_line(buf);
}

struct PrepareFeaturesArgs {
    std::string sar, out;
};

void run_prepare_features(const PrepareFeaturesArgs& a) {
    const fr::IntensityStack stack = fr::load_intensity_stack(a.sar);
    const fr::BandRaster features = fr::temporal_stats(stack);
    features.save(a.out);
    log_line("prepare-features: wrote " + std::to_string(features.band_count()) + " bands from " +
             std::to_string(stack.scenes.size()) + " scenes");
}

struct BuildDatasetArgs {
    std::string features, targets, out;
    int superpatch = 128;
    double min_overlap = 0.10, test_fraction = 0.15;
    int patch = 64, train_stride = 32, test_stride = 64;
    bool no_augment = false;
    std::uint64_t seed = 0;
};

void run_build_dataset(const BuildDatasetArgs& a) {
    const fr::BandRaster features = fr::BandRaster::load(a.features);
    const fr::ImputedTargetSet targets = fr::ImputedTargetSet::load(a.targets);
    if (features.width() != targets.target.width() || features.height() != targets.target.height())
        throw fr::ValidationError("features and targets disagree on scene dimensions");

    const auto sps = fr::split_superpatches(features.width(), features.height(), a.superpatch,
                                            a.superpatch);
    const fr::SuperpatchSplit split =
        fr::select_test_superpatches(sps, targets.m_pt.band(0), features.width(), a.min_overlap,
                                     a.test_fraction, a.seed);
    if (split.truncated)
        log_line("build-dataset: warning: fewer candidate superpatches than requested test count");

    std::vector<fr::PatchRef> refs;
    for (const auto& sp : split.train_pool) {
        const auto r = fr::extract_patches(sp, targets.m_pt.band(0), features.width(), a.patch,
                                           a.train_stride, !a.no_augment, fr::PatchRole::Train);
        refs.insert(refs.end(), r.begin(), r.end());
    }
    const std::size_t train_count = refs.size();
    for (const auto& sp : split.test) {
        const auto r = fr::extract_patches(sp, targets.m_pt.band(0), features.width(), a.patch,
                                           a.test_stride, false, fr::PatchRole::Test);
        refs.insert(refs.end(), r.begin(), r.end());
    }
    std::filesystem::create_directories(a.out);
    fr::save_patch_manifest(refs, std::filesystem::path(a.out) / "manifest.jsonl");
    json summary{{"superpatches", sps.size()},
                 {"test_superpatches", split.test.size()},
                 {"train_superpatches", split.train_pool.size()},
                 {"candidates", split.candidate_count},
                 {"truncated", split.truncated},
                 {"train_patches", train_count},
                 {"test_patches", refs.size() - train_count},
                 {"patch", a.patch},
                 {"train_stride", a.train_stride},
                 {"test_stride", a.test_stride},
                 {"augment", !a.no_augment},
                 {"seed", a.seed}};
    fr::atomic_write_text(std::filesystem::path(a.out) / "dataset.json", summary.dump(2) + "\n");
    log_line("build-dataset: " + std::to_string(train_count) + " train / " +
             std::to_string(refs.size() - train_count) + " test patch refs");
}

struct TrainArgs {
    std::string config, features, targets, manifest, checkpoint, out;
};

std::vector<fr::PatchSample> load_train_samples(const std::string& features_dir,
                                                const std::string& targets_dir,
                                                const std::string& manifest_path,
                                                const fr::TrainConfig& cfg) {
    const fr::BandRaster features = fr::BandRaster::load(features_dir);
    if (features.band_count() != cfg.in_channels)
        throw fr::ValidationError("config in_channels " + std::to_string(cfg.in_channels) +
                                  " does not match feature raster bands " +
                                  std::to_string(features.band_count()));
    const fr::ImputedTargetSet targets = fr::ImputedTargetSet::load(targets_dir);
    const auto all_refs = fr::load_patch_manifest(manifest_path);
    std::vector<fr::PatchRef> train_refs;
    for (const auto& r : all_refs)
        if (r.role == fr::PatchRole::Train) train_refs.push_back(r);
    if (train_refs.empty()) throw fr::ValidationError("manifest has no training patches");
    return fr::build_train_samples(features, targets, train_refs);
}

void report_epochs(const std::vector<fr::EpochLog>& log) {
    for (const auto& e : log) {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "epoch %d: l1=%.6g gan_g=%.6g gan_d=%.6g fft=%.6g total=%.6g (%.2fs)",
                      e.epoch, e.l1, e.gan_g, e.gan_d, e.fft, e.total, e.wall_seconds);
        log_line(buf);
    }
}

void run_train_stage(const TrainArgs& a, bool is_finetune) {
    const fr::TrainConfig cfg = fr::TrainConfig::load(a.config);
    const char* want = is_finetune ? "finetune" : "pretrain";
    if (cfg.stage != want)
        throw fr::ValidationError(std::string("config stage is '") + cfg.stage + "', expected '" +
                                  want + "'");
    const auto samples = load_train_samples(a.features, a.targets, a.manifest, cfg);
    log_line(std::string(want) + ": " + std::to_string(samples.size()) + " samples, " +
             std::to_string(cfg.epochs) + " epochs");
    fr::Trainer trainer(cfg);
    const auto log = is_finetune ? fr::finetune(trainer, a.checkpoint, samples)
                                 : fr::pretrain(trainer, samples);
    report_epochs(log);
    std::filesystem::create_directories(a.out);
    trainer.save_checkpoint(std::filesystem::path(a.out) / "checkpoint");
    fr::write_train_log(log, std::filesystem::path(a.out) / "train_log.csv");
    log_line(std::string(want) + ": checkpoint written to " + a.out);
}

struct PredictArgs {
    std::string checkpoint, features, out;
    int patch = 64, stride = 32;
    fr::BlendSpec blend;
};

void run_predict(const PredictArgs& a) {
    const fr::TrainConfig cfg = fr::load_checkpoint_config(a.checkpoint);
    fr::Trainer trainer(cfg);
    trainer.init_params();
    trainer.load_checkpoint(a.checkpoint);
    const fr::BandRaster features = fr::BandRaster::load(a.features);
    if (features.band_count() != cfg.in_channels)
        throw fr::ValidationError("feature raster bands do not match the checkpoint");
    const fr::BandRaster pred =
        fr::predict_scene(trainer.generator(), features, a.blend, a.patch, a.stride);
    pred.save(a.out);
    log_line("predict: wrote " + a.out);
}

struct EvaluateArgs {
    std::string prediction, truth, targets, mask_name, plots, out;
    double footprint_radius = 8.0;
};

void run_evaluate(const EvaluateArgs& a) {
    if (a.truth.empty() && a.plots.empty())
        throw fr::UsageError("evaluate needs --truth and/or --plots");
    const fr::BandRaster pred = fr::BandRaster::load(a.prediction);
    json result;
    if (!a.plots.empty()) {
        const auto plots = fr::load_plots_csv(a.plots);
        const fr::MetricReport m = fr::plot_level_eval(pred, plots, a.footprint_radius);
        result = metric_json(m);
        result["kind"] = "plot";
    }
    if (!a.truth.empty()) {
        const fr::BandRaster truth = fr::BandRaster::load(a.truth);
        if (truth.width() != pred.width() || truth.height() != pred.height())
            throw fr::ValidationError("truth and prediction dimensions differ");
        const std::vector<float>* mask = nullptr;
        fr::ImputedTargetSet targets;
        if (!a.targets.empty()) {
            targets = fr::ImputedTargetSet::load(a.targets);
            if (a.mask_name == "m_gr")
                mask = &targets.m_gr.band(0);
            else if (a.mask_name == "m_pt")
                mask = &targets.m_pt.band(0);
            else
                throw fr::UsageError("--mask must be m_gr or m_pt");
        }
        const fr::MetricReport m = fr::rmse_mae(pred.band(0), truth.band(0), mask);
        if (result.is_null()) {
            result = metric_json(m);
            result["kind"] = "pixel";
        } else {
            result["pixel"] = metric_json(m);
        }
    }
    fr::atomic_write_text(a.out, result.dump(2) + "\n");
    log_line("evaluate: wrote " + a.out);
}

struct GridSearchArgs {
    std::string grid, features, targets, plots, out;
    int folds = 5;
    std::uint64_t seed = 0;
};

std::vector<fr::TrainConfig> expand_grid(const std::string& path) {
    json j;
    try {
        j = json::parse(fr::read_text(path));
    } catch (const json::exception& e) {
        throw fr::ValidationError("bad grid file: " + std::string(e.what()));
    }
    if (!j.contains("base")) throw fr::ValidationError("grid file needs a \"base\" config");
    const fr::TrainConfig base = fr::TrainConfig::from_json_text(j["base"].dump());
    auto axis = [&](const char* key, double fallback) {
        std::vector<double> vals;
        if (j.contains(key))
            for (const auto& v : j[key]) vals.push_back(v.get<double>());
        if (vals.empty()) vals.push_back(fallback);
        return vals;
    };
    std::vector<fr::TrainConfig> grid;
    for (double alpha : axis("alpha", base.loss.alpha))
        for (double gamma : axis("gamma", base.loss.gamma))
            for (double delta : axis("delta", base.loss.delta)) {
                fr::TrainConfig c = base;
                c.loss.alpha = alpha;
                c.loss.gamma = gamma;
                c.loss.delta = delta;
                c.validate();
                grid.push_back(c);
            }
    return grid;
}

void run_gridsearch(const GridSearchArgs& a) {
    const auto grid = expand_grid(a.grid);
    const fr::BandRaster features = fr::BandRaster::load(a.features);
    const fr::ImputedTargetSet pseudo = fr::ImputedTargetSet::load(a.targets);
    const auto plots = fr::load_plots_csv(a.plots);
    const fr::CvSplit folds = fr::cv_folds(plots.size(), a.folds, a.seed);
    fr::GridSearchInput in;
    in.features = &features;
    in.pseudo = &pseudo;
    in.plots = &plots;
    log_line("gridsearch: " + std::to_string(grid.size()) + " configs x " +
             std::to_string(a.folds) + " folds");
    const auto ranked = fr::grid_search(grid, folds, in);
    json out = json::array();
    for (const auto& e : ranked)
        out.push_back({{"config", json::parse(e.config.to_json())},
                       {"fold_rmse", e.fold_rmse},
                       {"mean_rmse", e.mean_rmse},
                       {"median_rmse", e.median_rmse}});
    fr::atomic_write_text(a.out, out.dump(2) + "\n");
    char buf[120];
    std::snprintf(buf, sizeof buf, "gridsearch: best mean RMSE %.6g (median %.6g)",
                  ranked.front().mean_rmse, ranked.front().median_rmse);
    log_line(buf);
}

int run_gradcheck_cmd(std::uint64_t seed) {
    const auto results = fr::run_gradcheck(seed);
    for (const auto& r : results) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-26s max_rel_err=%.3e tol=%.0e %s", r.name.c_str(),
                      r.max_rel_err, r.tolerance, r.pass ? "ok" : "FAIL");
        log_line(buf);
    }
    if (!fr::all_passed(results)) {
        log_line("gradcheck: FAILED");
        return 4;
    }
    log_line("gradcheck: all " + std::to_string(results.size()) + " suites passed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forest parameter regression via pseudo-target imputation"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (1 = deterministic)")
        ->capture_default_str();

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "generate a synthetic scene");
    c_synth->add_option("--out", synth.out, "output directory")->required();
    c_synth->add_option("--seed", synth.spec.seed, "random seed");
    c_synth->add_option("--width", synth.spec.width, "scene width (cells)");
    c_synth->add_option("--height", synth.spec.height, "scene height (cells)");
    c_synth->add_option("--cell-size", synth.spec.cell_size, "cell size (m)");
    c_synth->add_option("--coverage", synth.spec.coverage, "pseudo-target coverage fraction");
    c_synth->add_option("--plots", synth.spec.plots, "ground plot count");
    c_synth->add_option("--scenes", synth.spec.scenes, "SAR scenes in the stack");
    c_synth->add_option("--value-max", synth.spec.value_max, "upper end of the parameter range");
    c_synth->add_option("--smooth-passes", synth.spec.smooth_passes, "field smoothing passes");
    c_synth->add_option("--bias", synth.spec.poly_bias, "pseudo-target additive bias");
    c_synth->add_option("--noise", synth.spec.poly_noise, "pseudo-target noise sigma");
    c_synth->add_option("--speckle", synth.spec.speckle, "speckle log-sigma");

    PrepareTargetsArgs pt;
    auto* c_pt = app.add_subcommand("prepare-targets", "rasterize polygons into a target map");
    c_pt->add_option("--polygons", pt.polygons, "polygon JSONL file")->required();
    c_pt->add_option("--grid-from", pt.grid_from, "raster directory defining the grid")->required();
    c_pt->add_option("--out", pt.out, "output target-set directory")->required();
    c_pt->add_option("--plots", pt.plots, "optional plot CSV to impute");
    c_pt->add_option("--threshold", pt.threshold, "areal coverage threshold");
    c_pt->add_flag("--density-normalize", pt.density_normalize,
                   "rescale cell values by cell_area/A_merged");

    PrepareFeaturesArgs pf;
    auto* c_pf = app.add_subcommand("prepare-features", "temporal SAR statistics");
    c_pf->add_option("--sar", pf.sar, "intensity stack directory")->required();
    c_pf->add_option("--out", pf.out, "output feature raster directory")->required();

    BuildDatasetArgs bd;
    auto* c_bd = app.add_subcommand("build-dataset", "superpatch split + patch manifest");
    c_bd->add_option("--features", bd.features, "feature raster directory")->required();
    c_bd->add_option("--targets", bd.targets, "target-set directory")->required();
    c_bd->add_option("--out", bd.out, "output dataset directory")->required();
    c_bd->add_option("--superpatch", bd.superpatch, "superpatch side (cells)");
    c_bd->add_option("--min-overlap", bd.min_overlap, "min pseudo coverage for test candidates");
    c_bd->add_option("--test-fraction", bd.test_fraction, "test superpatch fraction");
    c_bd->add_option("--patch", bd.patch, "patch side (cells)");
    c_bd->add_option("--train-stride", bd.train_stride, "train window stride");
    c_bd->add_option("--test-stride", bd.test_stride, "test window stride");
    c_bd->add_flag("--no-augment", bd.no_augment, "skip dihedral augmentation refs");
    c_bd->add_option("--seed", bd.seed, "test selection seed");

    TrainArgs pre;
    auto* c_pre = app.add_subcommand("pretrain", "train on pseudo + imputed targets");
    c_pre->add_option("--config", pre.config, "train config JSON")->required();
    c_pre->add_option("--features", pre.features, "feature raster directory")->required();
    c_pre->add_option("--targets", pre.targets, "target-set directory")->required();
    c_pre->add_option("--manifest", pre.manifest, "patch manifest JSONL")->required();
    c_pre->add_option("--out", pre.out, "output directory")->required();

    TrainArgs fin;
    auto* c_fin = app.add_subcommand("finetune", "continue from a checkpoint");
    c_fin->add_option("--config", fin.config, "train config JSON")->required();
    c_fin->add_option("--features", fin.features, "feature raster directory")->required();
    c_fin->add_option("--targets", fin.targets, "target-set directory")->required();
    c_fin->add_option("--manifest", fin.manifest, "patch manifest JSONL")->required();
    c_fin->add_option("--checkpoint", fin.checkpoint, "input checkpoint directory")->required();
    c_fin->add_option("--out", fin.out, "output directory")->required();

    PredictArgs pr;
    auto* c_prd = app.add_subcommand("predict", "wall-to-wall blended prediction");
    c_prd->add_option("--checkpoint", pr.checkpoint, "checkpoint directory")->required();
    c_prd->add_option("--features", pr.features, "feature raster directory")->required();
    c_prd->add_option("--out", pr.out, "output raster directory")->required();
    c_prd->add_option("--patch", pr.patch, "patch side");
    c_prd->add_option("--stride", pr.stride, "window stride");
    c_prd->add_option("--p", pr.blend.p, "blending p-norm exponent");
    c_prd->add_option("--eps", pr.blend.eps, "blending weight floor");

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "pixel and/or plot-level metrics");
    c_ev->add_option("--prediction", ev.prediction, "prediction raster directory")->required();
    c_ev->add_option("--out", ev.out, "output metrics JSON")->required();
    c_ev->add_option("--truth", ev.truth, "truth raster directory");
    c_ev->add_option("--targets", ev.targets, "target-set directory for masked metrics");
    c_ev->add_option("--mask", ev.mask_name, "mask band: m_gr or m_pt");
    c_ev->add_option("--plots", ev.plots, "plot CSV for footprint evaluation");
    c_ev->add_option("--footprint-radius", ev.footprint_radius, "plot footprint radius (m)");

    GridSearchArgs gs;
    auto* c_gs = app.add_subcommand("gridsearch", "k-fold CV over a hyperparameter grid");
    c_gs->add_option("--grid", gs.grid, "grid JSON (base + alpha/gamma/delta lists)")->required();
    c_gs->add_option("--features", gs.features, "feature raster directory")->required();
    c_gs->add_option("--targets", gs.targets, "pre-imputation target-set directory")->required();
    c_gs->add_option("--plots", gs.plots, "plot CSV")->required();
    c_gs->add_option("--out", gs.out, "output results JSON")->required();
    c_gs->add_option("--folds", gs.folds, "fold count");
    c_gs->add_option("--seed", gs.seed, "fold assignment seed");

    std::uint64_t gc_seed = 42;
    auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    c_gc->add_option("--seed", gc_seed, "probe seed");

    // Let global options (--threads) appear after the subcommand too.
    for (auto* sc : app.get_subcommands([](const CLI::App*) { return true; })) sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        fr::set_thread_count(threads);
        if (*c_synth) run_synth(synth);
        if (*c_pt) run_prepare_targets(pt);
        if (*c_pf) run_prepare_features(pf);
        if (*c_bd) run_build_dataset(bd);
        if (*c_pre) run_train_stage(pre, false);
        if (*c_fin) run_train_stage(fin, true);
        if (*c_prd) run_predict(pr);
        if (*c_ev) run_evaluate(ev);
        if (*c_gs) run_gridsearch(gs);
        if (*c_gc) return run_gradcheck_cmd(gc_seed);
    } catch (const fr::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const fr::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
