#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "forestreg/synthgen.hpp"
#include "forestreg/train.hpp"

using namespace forestreg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path temp_dir(const std::string& leaf) {
    const fs::path p = fs::temp_directory_path() / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Small but trainable setup: one synthetic scene, full-coverage targets,
// four 64x64 patches.
struct TinyData {
    SynthScene scene;
    ImputedTargetSet targets;
    BandRaster features;
    std::vector<PatchSample> samples;

    explicit TinyData(std::uint64_t seed, int plots = 20) {
        SynthSpec spec;
        spec.width = 128;
        spec.height = 128;
        spec.cell_size = 16.0;
        spec.coverage = 0.8;
        spec.plots = plots;
        spec.scenes = 2;
        spec.seed = seed;
        scene = generate_scene(spec);

        const MergeResult merged = merge_multipolygons(scene.polygons, scene.truth.grid());
        targets = coverage_filter(merged.table, scene.truth.grid(), 0.40, false);
        impute_true_targets(targets, scene.plots);
        features = temporal_stats(scene.stack);

        std::vector<PatchRef> refs;
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                refs.push_back({x * 64, y * 64, 64, 0, PatchRole::Train, -1});
        samples = build_train_samples(features, targets, refs);
    }
};

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.stage = "pretrain";
    cfg.model = "par_unet";
    cfg.batch_size = 2;
    cfg.lr = 1e-4;
    cfg.beta1 = 0.8;
    cfg.epochs = 2;
    cfg.depth = 4;
    cfg.in_channels = 9;
    cfg.norm = "instance";
    cfg.stem_width = 4;
    cfg.disc_width = 4;
    cfg.augment = false;
    cfg.loss.delta = 200.0;
    cfg.seed = 99;
    return cfg;
}

}  // namespace

TEST_CASE("adam matches the closed-form first steps") {
    Param<double> p;
    p.name = "w";
    p.resize(1, 1, 1, 1);
    p.w.v[0] = 1.0;

    Adam<double> opt;
    opt.lr = 0.1;
    opt.beta1 = 0.8;
    opt.attach({&p});

    p.g.v[0] = 1.0;
    opt.step();
    CHECK(std::abs(p.w.v[0] - 0.900000001) <= 1e-12);
    p.g.v[0] = 1.0;
    opt.step();
    CHECK(std::abs(p.w.v[0] - 0.8000000020000007) <= 1e-12);
    CHECK(opt.step_count() == 2);
    CHECK(opt.skipped() == 0);
}

TEST_CASE("adam skips non-finite steps and freezes with lr zero") {
    Param<float> p;
    p.name = "w";
    p.resize(1, 2, 1, 1);
    p.w.v = {1.0f, -2.0f};

    Adam<float> opt;
    opt.attach({&p});
    p.g.v = {std::numeric_limits<float>::quiet_NaN(), 1.0f};
    opt.step();
    CHECK(opt.skipped() == 1);
    CHECK(opt.step_count() == 0);
    CHECK(p.w.v == std::vector<float>{1.0f, -2.0f});  // untouched

    Adam<float> frozen;
    frozen.lr = 0.0;
    frozen.attach({&p});
    p.g.v = {0.5f, -0.25f};
    frozen.step();
    CHECK(frozen.step_count() == 1);
    CHECK(p.w.v == std::vector<float>{1.0f, -2.0f});  // bit-identical

    // Non-trainable parameters are not attached.
    Param<float> buf;
    buf.trainable = false;
    buf.resize(1, 1, 1, 1);
    Adam<float> sel;
    sel.attach({&p, &buf});
    CHECK(sel.attached_params().size() == 1);
    CHECK(sel.moment_tensors().size() == 2);
}

TEST_CASE("train config round-trips through json and validates") {
    TrainConfig cfg = tiny_config();
    const std::string a = cfg.to_json();
    const TrainConfig back = TrainConfig::from_json_text(a);
    CHECK(back.to_json() == a);
    CHECK(back.batch_size == 2);
    CHECK(back.loss.delta == 200.0);
    CHECK(back.norm == "instance");

    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.stage = "warmup";
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.depth = 3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = cfg;
    bad.model = "cgan_unet";
    bad.loss.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);  // adversarial pretrain needs alpha
    bad.loss.alpha = 0.01;
    bad.loss.gan_kind = GanKind::Lsgan;
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("stage and objective resolve the effective loss") {
    TrainConfig cfg = tiny_config();
    cfg.loss.alpha = 0.01;
    cfg.loss.gamma = 1e-7;
    cfg.loss.gan_kind = GanKind::Lsgan;

    // par_unet pretraining is pure masked L1.
    LossConfig eff = cfg.effective_loss();
    CHECK(eff.effective_alpha() == 0.0);
    CHECK(eff.gamma == 0.0);
    CHECK(eff.delta == 200.0);

    cfg.model = "cgan_unet";
    eff = cfg.effective_loss();  // adversarial pretraining keeps the GAN term
    CHECK(eff.effective_alpha() == 0.01);
    CHECK(eff.gamma == 0.0);

    cfg.stage = "finetune";
    cfg.finetune_objective = "cgan";
    eff = cfg.effective_loss();
    CHECK(eff.effective_alpha() == 0.01);
    CHECK(eff.gamma == 0.0);

    cfg.finetune_objective = "l1+fft";
    eff = cfg.effective_loss();
    CHECK(eff.effective_alpha() == 0.0);
    CHECK(eff.gamma == 1e-7);

    cfg.finetune_objective = "cgan+fft";
    eff = cfg.effective_loss();
    CHECK(eff.effective_alpha() == 0.01);
    CHECK(eff.gamma == 1e-7);
}

TEST_CASE("train log has the documented columns") {
    std::vector<EpochLog> log(2);
    log[0] = {0, 1.5, 0.0, 0.0, 0.0, 1.5, 0.25};
    log[1] = {1, 1.25, 0.0, 0.0, 0.0, 1.25, 0.25};
    const fs::path p = fs::temp_directory_path() / "forestreg_test_log.csv";
    write_train_log(log, p);
    const std::string text = slurp(p);
    CHECK(text.rfind("epoch,l1,gan_g,gan_d,fft,total,wall_seconds\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    fs::remove(p);
}

TEST_CASE("pretraining runs and checkpoints byte-identically") {
    TinyData data(7);
    REQUIRE(data.samples.size() == 4);

    TrainConfig cfg = tiny_config();
    Trainer trainer(cfg);
    const auto log = pretrain(trainer, data.samples);
    REQUIRE(log.size() == 2);
    CHECK(std::isfinite(log[0].l1));
    CHECK(log[0].l1 > 0.0);
    CHECK(log[0].gan_d == 0.0);
    CHECK(trainer.epoch() == 2);

    const fs::path dir = temp_dir("forestreg_test_ckpt");
    trainer.save_checkpoint(dir / "a");

    Trainer clone(cfg);
    clone.load_checkpoint(dir / "a");
    clone.save_checkpoint(dir / "b");
    CHECK(slurp(dir / "a" / "data.bin") == slurp(dir / "b" / "data.bin"));
    CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));

    const TrainConfig stored = load_checkpoint_config(dir / "a");
    CHECK(stored.stem_width == cfg.stem_width);
    CHECK(stored.seed == cfg.seed);

    // A different architecture must refuse the checkpoint.
    TrainConfig other = cfg;
    other.stem_width = 8;
    Trainer mism(other);
    CHECK_THROWS_AS(mism.load_checkpoint(dir / "a"), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("identical seeds give identical training trajectories") {
    TinyData data(7);
    TrainConfig cfg = tiny_config();

    Trainer a(cfg), b(cfg);
    const auto la = pretrain(a, data.samples);
    const auto lb = pretrain(b, data.samples);
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) {
        CHECK(la[i].l1 == lb[i].l1);
        CHECK(la[i].total == lb[i].total);
    }

    const fs::path dir = temp_dir("forestreg_test_det");
    a.save_checkpoint(dir / "a");
    b.save_checkpoint(dir / "b");
    CHECK(slurp(dir / "a" / "data.bin") == slurp(dir / "b" / "data.bin"));
    fs::remove_all(dir);
}

TEST_CASE("adversarial finetuning alternates discriminator and generator") {
    TinyData data(7);

    TrainConfig pre = tiny_config();
    Trainer pt(pre);
    pretrain(pt, data.samples);
    const fs::path dir = temp_dir("forestreg_test_ft");
    pt.save_checkpoint(dir / "pre");

    TrainConfig ft = pre;
    ft.stage = "finetune";
    ft.model = "cgan_unet";
    ft.finetune_objective = "cgan";
    ft.epochs = 1;
    ft.discriminator = "pixelgan";
    ft.loss.alpha = 0.01;
    ft.loss.gan_kind = GanKind::Lsgan;
    Trainer ftr(ft);
    const auto log = finetune(ftr, dir / "pre", data.samples);
    REQUIRE(log.size() == 1);
    CHECK(std::isfinite(log[0].gan_d));
    CHECK(std::isfinite(log[0].gan_g));

    ftr.save_checkpoint(dir / "post");
    const auto manifest = nlohmann::json::parse(slurp(dir / "post" / "manifest.json"));
    // One discriminator step per generator step, counters reset at the stage
    // boundary: 4 samples / batch 2 = 2 steps each.
    CHECK(manifest.at("opt_g").at("steps").get<long>() == 2);
    CHECK(manifest.at("opt_d").at("steps").get<long>() == 2);

    // The finetuned checkpoint reloads into a fresh adversarial trainer.
    Trainer back(ft);
    back.load_checkpoint(dir / "post");
    back.save_checkpoint(dir / "post2");
    CHECK(slurp(dir / "post" / "data.bin") == slurp(dir / "post2" / "data.bin"));
    fs::remove_all(dir);
}

TEST_CASE("grid search ranks configurations by cross-validated rmse") {
    TinyData data(11, 24);

    // Pseudo targets without the plot imputation: grid_search folds it.
    const MergeResult merged = merge_multipolygons(data.scene.polygons, data.scene.truth.grid());
    const ImputedTargetSet pseudo =
        coverage_filter(merged.table, data.scene.truth.grid(), 0.40, false);

    TrainConfig base = tiny_config();
    base.epochs = 1;
    std::vector<TrainConfig> grid(2, base);
    grid[1].loss.delta = 1.0;

    const CvSplit folds = cv_folds(data.scene.plots.size(), 2, 5);
    GridSearchInput in;
    in.features = &data.features;
    in.pseudo = &pseudo;
    in.plots = &data.scene.plots;
    in.superpatch_w = 128;
    in.superpatch_h = 128;
    in.test_fraction = 0.0;  // keep the single superpatch trainable
    in.patch = 64;
    in.train_stride = 64;

    const auto entries = grid_search(grid, folds, in);
    REQUIRE(entries.size() == 2);
    for (const auto& e : entries) {
        CHECK(e.fold_rmse.size() == 2);
        for (double r : e.fold_rmse) CHECK(std::isfinite(r));
        CHECK(e.mean_rmse >= 0.0);
    }
    CHECK(entries[0].mean_rmse <= entries[1].mean_rmse);
}

TEST_CASE("every shipped preset config loads and validates") {
    const char* dir = std::getenv("FORESTREG_CONFIGS");
    REQUIRE(dir != nullptr);
    std::size_t count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        const TrainConfig cfg = TrainConfig::load(entry.path());
        CHECK_NOTHROW(cfg.validate());
        CHECK(cfg.in_channels == 9);
        CHECK((cfg.depth == 4 || cfg.depth == 5));
        if (cfg.stage == "finetune" || cfg.model == "cgan_unet")
            CHECK(cfg.effective_loss().delta >= 200.0);
        ++count;
    }
    CHECK(count == 12);
}
