#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forestreg/dataset.hpp"
#include "forestreg/discriminator.hpp"
#include "forestreg/generator.hpp"
#include "forestreg/infer.hpp"
#include "forestreg/losses.hpp"

namespace forestreg {

// Bias-corrected Adam over the trainable parameters of an attached list.
// A step with any non-finite gradient element is skipped and counted.
template <typename T>
class Adam {
public:
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void attach(const ParamList<T>& params) {
        params_.clear();
        m_.clear();
        v_.clear();
        for (auto* p : params) {
            if (!p->trainable) continue;
            params_.push_back(p);
            m_.push_back(Tensor<T>::like(p->w));
            v_.push_back(Tensor<T>::like(p->w));
        }
    }

    bool attached() const { return !params_.empty(); }
    long step_count() const { return step_; }
    long skipped() const { return skipped_; }

    void step() {
        for (auto* p : params_)
            if (!p->g.all_finite()) {
                ++skipped_;
                return;
            }
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& w = params_[pi]->w.v;
            const auto& g = params_[pi]->g.v;
            auto& m = m_[pi].v;
            auto& v = v_[pi].v;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
                const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

    // Moment buffers in parameter registration order, for checkpointing.
    std::vector<Tensor<T>*> moment_tensors() {
        std::vector<Tensor<T>*> out;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.push_back(&m_[i]);
            out.push_back(&v_[i]);
        }
        return out;
    }

    const std::vector<Param<T>*>& attached_params() const { return params_; }

    void set_counters(long steps, long skips) {
        step_ = steps;
        skipped_ = skips;
    }

private:
    std::vector<Param<T>*> params_;
    std::vector<Tensor<T>> m_, v_;
    long step_ = 0;
    long skipped_ = 0;
};

struct TrainConfig {
    std::string stage = "pretrain";           // pretrain | finetune
    std::string model = "par_unet";           // par_unet | cgan_unet
    std::string finetune_objective = "cgan";  // cgan | l1+fft | cgan+fft
    int batch_size = 8;
    double lr = 1e-4;
    double beta1 = 0.8;
    int epochs = 200;
    int depth = 4;
    int in_channels = 9;
    std::string discriminator = "pixelgan";
    std::string norm = "none";
    int stem_width = 16;
    int disc_width = 16;
    int blocks_per_stage = 1;
    bool augment = true;
    LossConfig loss;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json_text(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Stage/model/objective resolved into the loss weights actually applied.
    LossConfig effective_loss() const;
    bool adversarial() const { return effective_loss().effective_alpha() > 0.0; }
};

struct EpochLog {
    int epoch = 0;
    double l1 = 0.0, gan_g = 0.0, gan_d = 0.0, fft = 0.0, total = 0.0;
    double wall_seconds = 0.0;
};

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

// Checkpoint directory: manifest.json (entry names/shapes/offsets, config
// hash, epoch/step counters) + data.bin (concatenated little-endian float32
// in manifest order). Round-trips are byte-identical.
struct TrainerState;

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    // Fresh initialization from the config seed.
    void init_params();

    // Zeroes optimizer moments and step counters (a fine-tuning stage is a
    // fresh optimization even when it continues from a checkpoint).
    void reset_optimizers();

    GeneratorNet<float>& generator() { return gen_; }
    DiscriminatorNet<float>* discriminator() { return disc_ ? &*disc_ : nullptr; }
    const TrainConfig& config() const { return cfg_; }

    // Runs cfg.epochs epochs over the samples; returns the per-epoch log.
    std::vector<EpochLog> train(const std::vector<PatchSample>& samples);

    void save_checkpoint(const std::filesystem::path& dir) const;
    // Loads parameters/optimizer state from dir; the architecture fields of
    // the stored config must match cfg (lr/epochs/stage may differ).
    void load_checkpoint(const std::filesystem::path& dir);

    int epoch() const { return epoch_; }

private:
    TrainConfig cfg_;
    GeneratorNet<float> gen_;
    std::optional<DiscriminatorNet<float>> disc_;
    Adam<float> opt_g_, opt_d_;
    int epoch_ = 0;

    friend struct TrainerState;

    LossReport train_batch(const std::vector<const PatchSample*>& batch);
};

// The TrainConfig stored inside a checkpoint directory.
TrainConfig load_checkpoint_config(const std::filesystem::path& dir);

// One-call stage drivers.
std::vector<EpochLog> pretrain(Trainer& trainer, const std::vector<PatchSample>& samples);
std::vector<EpochLog> finetune(Trainer& trainer, const std::filesystem::path& checkpoint,
                               const std::vector<PatchSample>& samples);

// Hyperparameter grid evaluation with plot-level k-fold CV: each fold
// imputes only its training plots, trains from scratch, predicts the scene
// and scores RMSE at the held-out plot cells. Ranking: mean RMSE, ties by
// median.
struct GridSearchInput {
    const BandRaster* features = nullptr;
    const ImputedTargetSet* pseudo = nullptr;  // before any plot imputation
    const std::vector<PlotRecord>* plots = nullptr;
    int superpatch_w = 128, superpatch_h = 128;
    double min_overlap = 0.10, test_fraction = 0.15;
    int patch = 64, train_stride = 32;
    BlendSpec blend;
};

struct GridEntry {
    TrainConfig config;
    std::vector<double> fold_rmse;
    double mean_rmse = 0.0;
    double median_rmse = 0.0;
};

std::vector<GridEntry> grid_search(const std::vector<TrainConfig>& grid, const CvSplit& folds,
                                   const GridSearchInput& in);

// Builds the train-side patch samples for a scene (used by the CLI and the
// grid search): superpatch split, test selection, stride extraction,
// materialization.
std::vector<PatchSample> build_train_samples(const BandRaster& features,
                                             const ImputedTargetSet& targets,
                                             const std::vector<PatchRef>& refs);

}  // namespace forestreg
