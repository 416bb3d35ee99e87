#include "forestreg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace forestreg {

namespace {
using nlohmann::json;

json loss_to_json(const LossConfig& l) {
    return json{{"alpha", l.alpha},     {"gamma", l.gamma},     {"delta", l.delta},
                {"gan_kind", gan_kind_name(l.gan_kind)},        {"label_a", l.label_a},
                {"label_b", l.label_b}, {"label_c", l.label_c}};
}

LossConfig loss_from_json(const json& j) {
    LossConfig l;
    l.alpha = j.value("alpha", 0.0);
    l.gamma = j.value("gamma", 0.0);
    l.delta = j.value("delta", 1.0);
    l.gan_kind = gan_kind_from(j.value("gan_kind", std::string("none")));
    l.label_a = j.value("label_a", 0.0);
    l.label_b = j.value("label_b", 1.0);
    l.label_c = j.value("label_c", 1.0);
    return l;
}

}  // namespace

void TrainConfig::validate() const {
    if (stage != "pretrain" && stage != "finetune")
        throw ValidationError("stage must be pretrain or finetune");
    if (model != "par_unet" && model != "cgan_unet")
        throw ValidationError("model must be par_unet or cgan_unet");
    if (finetune_objective != "cgan" && finetune_objective != "l1+fft" &&
        finetune_objective != "cgan+fft")
        throw ValidationError("finetune_objective must be cgan, l1+fft or cgan+fft");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (lr < 0.0) throw ValidationError("lr must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must be in (0,1)");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (depth != 4 && depth != 5) throw ValidationError("depth must be 4 or 5");
    if (in_channels < 1) throw ValidationError("in_channels must be >= 1");
    norm_kind_from(norm);
    disc_variant_from(discriminator);
    loss.validate();
    const LossConfig eff = effective_loss();
    if (stage == "pretrain" && model == "cgan_unet" && eff.effective_alpha() <= 0.0)
        throw ValidationError("cgan_unet pretraining needs alpha > 0 and a gan kind");
}

LossConfig TrainConfig::effective_loss() const {
    LossConfig eff = loss;
    if (stage == "pretrain") {
        eff.gamma = 0.0;
        if (model == "par_unet") {
            eff.alpha = 0.0;
            eff.gan_kind = GanKind::None;
        }
    } else {
        if (finetune_objective == "cgan") {
            eff.gamma = 0.0;
        } else if (finetune_objective == "l1+fft") {
            eff.alpha = 0.0;
            eff.gan_kind = GanKind::None;
        }
    }
    return eff;
}

std::string TrainConfig::to_json() const {
    json j{{"stage", stage},
           {"model", model},
           {"finetune_objective", finetune_objective},
           {"batch_size", batch_size},
           {"lr", lr},
           {"beta1", beta1},
           {"epochs", epochs},
           {"depth", depth},
           {"in_channels", in_channels},
           {"discriminator", discriminator},
           {"norm", norm},
           {"stem_width", stem_width},
           {"disc_width", disc_width},
           {"blocks_per_stage", blocks_per_stage},
           {"augment", augment},
           {"loss", loss_to_json(loss)},
           {"seed", seed}};
    return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("bad train config: " + std::string(e.what()));
    }
    TrainConfig c;
    c.stage = j.value("stage", c.stage);
    c.model = j.value("model", c.model);
    c.finetune_objective = j.value("finetune_objective", c.finetune_objective);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.epochs = j.value("epochs", c.epochs);
    c.depth = j.value("depth", c.depth);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.discriminator = j.value("discriminator", c.discriminator);
    c.norm = j.value("norm", c.norm);
    c.stem_width = j.value("stem_width", c.stem_width);
    c.disc_width = j.value("disc_width", c.disc_width);
    c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
    c.augment = j.value("augment", c.augment);
    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    return from_json_text(read_text(path));
}

void TrainConfig::save(const std::filesystem::path& path) const {
    atomic_write_text(path, to_json());
}

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "epoch,l1,gan_g,gan_d,fft,total,wall_seconds\n";
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.l1,
                      e.gan_g, e.gan_d, e.fft, e.total, e.wall_seconds);
        os << buf;
    }
    atomic_write_text(path, os.str());
}

namespace {

// Architecture signature for checkpoint compatibility: generator shape only,
// so a PAR U-Net checkpoint can seed adversarial fine-tuning.
std::string arch_signature(const TrainConfig& c) {
    json j{{"in_channels", c.in_channels},
           {"depth", c.depth},
           {"stem_width", c.stem_width},
           {"blocks_per_stage", c.blocks_per_stage},
           {"norm", c.norm}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

Tensor<float> mask_broadcast(const Tensor<float>& t, const Tensor<float>& m) {
    Tensor<float> out = t;
    const std::size_t plane = static_cast<std::size_t>(t.h) * t.w;
    for (int ni = 0; ni < t.n; ++ni) {
        const float* mp = m.plane(ni, 0);
        for (int ci = 0; ci < t.c; ++ci) {
            float* p = out.plane(ni, ci);
            for (std::size_t e = 0; e < plane; ++e) p[e] *= mp[e];
        }
    }
    return out;
}

Tensor<float> gather_samples(const Tensor<float>& t, const std::vector<int>& idx) {
    Tensor<float> out(static_cast<int>(idx.size()), t.c, t.h, t.w);
    const std::size_t per = static_cast<std::size_t>(t.c) * t.h * t.w;
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(t.plane(idx[i], 0), per, out.plane(static_cast<int>(i), 0));
    return out;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    GeneratorConfig gc;
    gc.in_channels = cfg_.in_channels;
    gc.depth = cfg_.depth;
    gc.stem_width = cfg_.stem_width;
    gc.blocks_per_stage = cfg_.blocks_per_stage;
    gc.norm = norm_kind_from(cfg_.norm);
    gen_ = GeneratorNet<float>(gc);
    if (cfg_.adversarial()) {
        DiscriminatorConfig dc;
        dc.in_channels = cfg_.in_channels + 1;
        dc.variant = disc_variant_from(cfg_.discriminator);
        dc.width = cfg_.disc_width;
        dc.norm = norm_kind_from(cfg_.norm);
        disc_.emplace(dc);
    }
    opt_g_.lr = cfg_.lr;
    opt_g_.beta1 = cfg_.beta1;
    opt_g_.attach(gen_.params());
    if (disc_) {
        opt_d_.lr = cfg_.lr;
        opt_d_.beta1 = cfg_.beta1;
        opt_d_.attach(disc_->params());
    }
}

void Trainer::init_params() {
    gen_.init(cfg_.seed);
    if (disc_) disc_->init(mix_seed(cfg_.seed, 0xd));
}

void Trainer::reset_optimizers() {
    opt_g_.attach(gen_.params());
    opt_g_.set_counters(0, 0);
    if (disc_) {
        opt_d_.attach(disc_->params());
        opt_d_.set_counters(0, 0);
    }
}

LossReport Trainer::train_batch(const std::vector<const PatchSample*>& batch) {
    const int bs = static_cast<int>(batch.size());
    const int s = batch[0]->target.h;
    Tensor<float> x(bs, cfg_.in_channels, s, s), y(bs, 1, s, s), m_gr(bs, 1, s, s),
        m_pt(bs, 1, s, s);
    const std::size_t xin = static_cast<std::size_t>(cfg_.in_channels) * s * s;
    const std::size_t one = static_cast<std::size_t>(s) * s;
    for (int i = 0; i < bs; ++i) {
        if (batch[i]->input.c != cfg_.in_channels)
            throw ValidationError("patch channel count does not match config in_channels");
        std::copy_n(batch[i]->input.v.data(), xin, x.plane(i, 0));
        std::copy_n(batch[i]->target.v.data(), one, y.plane(i, 0));
        std::copy_n(batch[i]->m_gr.v.data(), one, m_gr.plane(i, 0));
        std::copy_n(batch[i]->m_pt.v.data(), one, m_pt.plane(i, 0));
    }

    const LossConfig eff = cfg_.effective_loss();
    const double alpha = eff.effective_alpha();
    LossReport rep;

    Tensor<float> yhat = gen_.forward(x);

    struct MaskSide {
        const Tensor<float>* mask = nullptr;
        double boost = 1.0;
        std::vector<int> idx;
        Tensor<float> xm, ym, yhm;  // masked inputs gathered to active samples
        double gan_g = 0.0;
        double gan_d = 0.0;
    };
    std::vector<MaskSide> sides;
    if (alpha > 0.0) {
        sides.emplace_back();
        sides.back().mask = &m_gr;
        sides.back().boost = eff.delta;
        sides.emplace_back();
        sides.back().mask = &m_pt;
        for (auto& side : sides) {
            const auto act = mask_active_flags(*side.mask);
            for (int i = 0; i < bs; ++i)
                if (act[static_cast<std::size_t>(i)]) side.idx.push_back(i);
            if (side.idx.empty()) continue;
            side.xm = gather_samples(mask_broadcast(x, *side.mask), side.idx);
            side.ym = gather_samples(mask_broadcast(y, *side.mask), side.idx);
            side.yhm = gather_samples(mask_broadcast(yhat, *side.mask), side.idx);
        }

        // Discriminator step first; evaluation is per separable term so each
        // forward can be backpropagated before the next reuses layer caches.
        disc_->zero_grad();
        const bool vgan = eff.gan_kind == GanKind::Vgan;
        auto d_term = [&](const Tensor<float>& xy, double label, bool real_side, double weight,
                          Tensor<float>* dxy_out) -> double {
            Tensor<float> r = disc_->forward(xy);
            Tensor<float> dr = Tensor<float>::like(r);
            double val = 0.0;
            if (!vgan) {
                val = lsgan_g_loss(r, label, &dr, weight);
            } else {
                Sigmoid<float> sig;
                Tensor<float> p = sig.forward(r);
                Tensor<float> dp = Tensor<float>::like(p);
                const double scale = 1.0 / static_cast<double>(p.numel());
                for (std::size_t e = 0; e < p.numel(); ++e) {
                    const double pv = detail::clamp_prob(static_cast<double>(p.v[e]));
                    if (real_side) {
                        val -= std::log(pv) * scale;
                        dp.v[e] = static_cast<float>(weight * (-1.0 / pv) * scale);
                    } else {
                        val -= std::log(1.0 - pv) * scale;
                        dp.v[e] = static_cast<float>(weight * (1.0 / (1.0 - pv)) * scale);
                    }
                }
                dr = sig.backward(dp);
            }
            Tensor<float> dxy = disc_->backward(dr);
            if (dxy_out) *dxy_out = std::move(dxy);
            return val;
        };

        for (auto& side : sides) {
            if (side.idx.empty()) continue;
            const double scale =
                static_cast<double>(side.idx.size()) / static_cast<double>(bs);
            const double w = side.boost * scale;
            const double real_v =
                d_term(concat_c(side.xm, side.ym), eff.label_b, true, w, nullptr);
            const double fake_v =
                d_term(concat_c(side.xm, side.yhm), eff.label_a, false, w, nullptr);
            side.gan_d = (real_v + fake_v) * scale;
        }
        rep.gan_d = eff.delta * sides[0].gan_d + sides[1].gan_d;
        opt_d_.step();
    }

    // Generator step against the updated discriminator.
    gen_.zero_grad();
    Tensor<float> dyhat = Tensor<float>::like(yhat);
    rep.l1_gr = masked_l1(y, yhat, m_gr, &dyhat, eff.delta);
    rep.l1_pt = masked_l1(y, yhat, m_pt, &dyhat, 1.0);
    if (eff.gamma > 0.0) {
        rep.fft_gr = masked_fft(y, yhat, m_gr, &dyhat, eff.gamma * eff.delta);
        rep.fft_pt = masked_fft(y, yhat, m_pt, &dyhat, eff.gamma);
    }
    if (alpha > 0.0) {
        const bool vgan = eff.gan_kind == GanKind::Vgan;
        for (auto& side : sides) {
            if (side.idx.empty()) continue;
            const double scale =
                static_cast<double>(side.idx.size()) / static_cast<double>(bs);
            const double w = alpha * side.boost * scale;
            Tensor<float> xy = concat_c(side.xm, side.yhm);
            Tensor<float> r = disc_->forward(xy);
            Tensor<float> dr = Tensor<float>::like(r);
            double val = 0.0;
            if (!vgan) {
                val = lsgan_g_loss(r, eff.label_c, &dr, w);
            } else {
                Sigmoid<float> sig;
                Tensor<float> p = sig.forward(r);
                Tensor<float> dp = Tensor<float>::like(p);
                const double us = 1.0 / static_cast<double>(p.numel());
                for (std::size_t e = 0; e < p.numel(); ++e) {
                    const double pv = detail::clamp_prob(static_cast<double>(p.v[e]));
                    val -= std::log(pv) * us;
                    dp.v[e] = static_cast<float>(w * (-1.0 / pv) * us);
                }
                dr = sig.backward(dp);
            }
            side.gan_g = val * scale;
            Tensor<float> dxy = disc_->backward(dr);
            Tensor<float> dxm, dyhm;
            split_c(dxy, cfg_.in_channels, dxm, dyhm);
            // Chain back through the mask Hadamard on yhat; the x side takes
            // no gradient.
            const std::size_t plane = one;
            for (std::size_t i = 0; i < side.idx.size(); ++i) {
                float* dst = dyhat.plane(side.idx[i], 0);
                const float* src = dyhm.plane(static_cast<int>(i), 0);
                const float* mp = side.mask->plane(side.idx[i], 0);
                for (std::size_t e = 0; e < plane; ++e) dst[e] += src[e] * mp[e];
            }
        }
    }
    gen_.backward(dyhat);
    opt_g_.step();

    if (!sides.empty()) {
        rep.gan_gr = sides[0].gan_g;
        rep.gan_pt = sides[1].gan_g;
    }
    rep.l1 = eff.delta * rep.l1_gr + rep.l1_pt;
    rep.fft = eff.delta * rep.fft_gr + rep.fft_pt;
    rep.gan_g = eff.delta * rep.gan_gr + rep.gan_pt;
    rep.total = rep.l1 + eff.gamma * rep.fft + alpha * rep.gan_g;
    return rep;
}

std::vector<EpochLog> Trainer::train(const std::vector<PatchSample>& samples) {
    if (samples.empty()) throw ValidationError("dataset empty");
    gen_.set_train(true);
    if (disc_) disc_->set_train(true);
    std::vector<EpochLog> log;
    log.reserve(static_cast<std::size_t>(cfg_.epochs));
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int e = 0; e < cfg_.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(mix_seed(cfg_.seed, 0xe90c0 + static_cast<std::uint64_t>(epoch_)));
        rng.shuffle(order);
        EpochLog el;
        el.epoch = epoch_;
        std::size_t seen = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg_.batch_size)) {
            std::vector<const PatchSample*> batch;
            for (std::size_t i = at;
                 i < std::min(order.size(), at + static_cast<std::size_t>(cfg_.batch_size)); ++i)
                batch.push_back(&samples[order[i]]);
            const LossReport rep = train_batch(batch);
            const double nb = static_cast<double>(batch.size());
            el.l1 += rep.l1 * nb;
            el.gan_g += rep.gan_g * nb;
            el.gan_d += rep.gan_d * nb;
            el.fft += rep.fft * nb;
            el.total += rep.total * nb;
            seen += batch.size();
        }
        const double inv = 1.0 / static_cast<double>(seen);
        el.l1 *= inv;
        el.gan_g *= inv;
        el.gan_d *= inv;
        el.fft *= inv;
        el.total *= inv;
        el.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back(el);
        ++epoch_;
    }
    return log;
}

namespace {

struct Entry {
    std::string name;
    Tensor<float>* tensor;
};

std::vector<Entry> checkpoint_entries(GeneratorNet<float>& gen,
                                      DiscriminatorNet<float>* disc, Adam<float>& opt_g,
                                      Adam<float>* opt_d) {
    std::vector<Entry> out;
    for (auto* p : gen.params()) out.push_back({"gen/" + p->name, &p->w});
    if (disc)
        for (auto* p : disc->params()) out.push_back({"disc/" + p->name, &p->w});
    {
        const auto& ps = opt_g.attached_params();
        auto ms = opt_g.moment_tensors();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            out.push_back({"opt_g/m/" + ps[i]->name, ms[2 * i]});
            out.push_back({"opt_g/v/" + ps[i]->name, ms[2 * i + 1]});
        }
    }
    if (opt_d && opt_d->attached()) {
        const auto& ps = opt_d->attached_params();
        auto ms = opt_d->moment_tensors();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            out.push_back({"opt_d/m/" + ps[i]->name, ms[2 * i]});
            out.push_back({"opt_d/v/" + ps[i]->name, ms[2 * i + 1]});
        }
    }
    return out;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    auto* self = const_cast<Trainer*>(this);
    std::filesystem::create_directories(dir);
    auto entries = checkpoint_entries(self->gen_, self->disc_ ? &*self->disc_ : nullptr,
                                      self->opt_g_, self->disc_ ? &self->opt_d_ : nullptr);
    json manifest;
    manifest["format"] = "forestreg-checkpoint-1";
    manifest["arch_hash"] = arch_signature(cfg_);
    manifest["config"] = json::parse(cfg_.to_json());
    manifest["epoch"] = epoch_;
    manifest["opt_g"] = {{"steps", opt_g_.step_count()}, {"skipped", opt_g_.skipped()}};
    if (disc_)
        manifest["opt_d"] = {{"steps", opt_d_.step_count()}, {"skipped", opt_d_.skipped()}};
    json jentries = json::array();
    std::vector<float> data;
    std::size_t offset = 0;
    for (const auto& e : entries) {
        const auto& t = *e.tensor;
        jentries.push_back({{"name", e.name},
                            {"shape", {t.n, t.c, t.h, t.w}},
                            {"offset", offset},
                            {"count", t.numel()}});
        data.insert(data.end(), t.v.begin(), t.v.end());
        offset += t.numel();
    }
    manifest["entries"] = jentries;
    atomic_write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_f32_le(data, dir / "data.bin");
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ValidationError("bad checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", std::string()) != "forestreg-checkpoint-1")
        throw ValidationError("unsupported checkpoint format");
    if (manifest.value("arch_hash", std::string()) != arch_signature(cfg_))
        throw ValidationError("checkpoint/config architecture mismatch");
    std::size_t total = 0;
    for (const auto& je : manifest.at("entries")) total += je.at("count").get<std::size_t>();
    const auto data = read_f32_le(dir / "data.bin", total);

    std::map<std::string, std::pair<std::size_t, std::size_t>> index;  // name -> offset,count
    for (const auto& je : manifest.at("entries"))
        index[je.at("name").get<std::string>()] = {je.at("offset").get<std::size_t>(),
                                                   je.at("count").get<std::size_t>()};
    auto load_into = [&](const std::string& name, Tensor<float>& t, bool required) {
        auto it = index.find(name);
        if (it == index.end()) {
            if (required) throw ValidationError("checkpoint missing entry: " + name);
            return false;
        }
        if (it->second.second != t.numel())
            throw ValidationError("checkpoint entry size mismatch: " + name);
        std::copy_n(data.data() + it->second.first, t.numel(), t.v.data());
        return true;
    };
    for (auto* p : gen_.params()) load_into("gen/" + p->name, p->w, true);
    if (disc_) {
        bool have_all = true;
        for (auto* p : disc_->params())
            have_all = load_into("disc/" + p->name, p->w, false) && have_all;
        // Missing discriminator entries mean adversarial fine-tuning starts
        // from a PAR U-Net: keep the fresh initialization.
        if (have_all && manifest.contains("opt_d")) {
            const auto& ps = opt_d_.attached_params();
            auto ms = opt_d_.moment_tensors();
            bool moments = true;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                moments = load_into("opt_d/m/" + ps[i]->name, *ms[2 * i], false) && moments;
                moments = load_into("opt_d/v/" + ps[i]->name, *ms[2 * i + 1], false) && moments;
            }
            if (moments)
                opt_d_.set_counters(manifest["opt_d"].value("steps", 0L),
                                    manifest["opt_d"].value("skipped", 0L));
        }
    }
    {
        const auto& ps = opt_g_.attached_params();
        auto ms = opt_g_.moment_tensors();
        bool moments = true;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            moments = load_into("opt_g/m/" + ps[i]->name, *ms[2 * i], false) && moments;
            moments = load_into("opt_g/v/" + ps[i]->name, *ms[2 * i + 1], false) && moments;
        }
        if (moments && manifest.contains("opt_g"))
            opt_g_.set_counters(manifest["opt_g"].value("steps", 0L),
                                manifest["opt_g"].value("skipped", 0L));
    }
    epoch_ = manifest.value("epoch", 0);
}

TrainConfig load_checkpoint_config(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ValidationError("bad checkpoint manifest: " + std::string(e.what()));
    }
    if (!manifest.contains("config")) throw ValidationError("checkpoint has no stored config");
    return TrainConfig::from_json_text(manifest["config"].dump());
}

std::vector<EpochLog> pretrain(Trainer& trainer, const std::vector<PatchSample>& samples) {
    if (trainer.config().stage != "pretrain")
        throw ValidationError("pretrain called with a finetune config");
    trainer.init_params();
    return trainer.train(samples);
}

std::vector<EpochLog> finetune(Trainer& trainer, const std::filesystem::path& checkpoint,
                               const std::vector<PatchSample>& samples) {
    if (trainer.config().stage != "finetune")
        throw ValidationError("finetune called with a pretrain config");
    trainer.init_params();
    trainer.load_checkpoint(checkpoint);
    trainer.reset_optimizers();
    return trainer.train(samples);
}

std::vector<PatchSample> build_train_samples(const BandRaster& features,
                                             const ImputedTargetSet& targets,
                                             const std::vector<PatchRef>& refs) {
    std::vector<PatchSample> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back(materialize_patch(features, targets, r));
    return out;
}

std::vector<GridEntry> grid_search(const std::vector<TrainConfig>& grid, const CvSplit& folds,
                                   const GridSearchInput& in) {
    if (grid.empty()) throw ValidationError("empty grid");
    if (!in.features || !in.pseudo || !in.plots) throw ValidationError("grid search input incomplete");
    const auto& plots = *in.plots;
    if (folds.fold_of.size() != plots.size())
        throw ValidationError("fold assignment size mismatch");

    std::vector<GridEntry> out;
    for (const auto& cfg : grid) {
        cfg.validate();
        GridEntry entry;
        entry.config = cfg;
        for (int f = 0; f < folds.k; ++f) {
            std::vector<PlotRecord> train_plots, held_out;
            for (std::size_t i = 0; i < plots.size(); ++i)
                (folds.fold_of[i] == f ? held_out : train_plots).push_back(plots[i]);
            if (held_out.empty()) throw ValidationError("empty validation fold");

            ImputedTargetSet targets = *in.pseudo;
            impute_true_targets(targets, train_plots);

            const auto sps = split_superpatches(in.features->width(), in.features->height(),
                                                in.superpatch_w, in.superpatch_h);
            const auto split =
                select_test_superpatches(sps, targets.m_pt.band(0), in.features->width(),
                                         in.min_overlap, in.test_fraction,
                                         mix_seed(cfg.seed, 0x5f0 + static_cast<std::uint64_t>(f)));
            std::vector<PatchRef> refs;
            for (const auto& sp : split.train_pool) {
                auto r = extract_patches(sp, targets.m_pt.band(0), in.features->width(), in.patch,
                                         in.train_stride, cfg.augment, PatchRole::Train);
                refs.insert(refs.end(), r.begin(), r.end());
            }
            auto samples = build_train_samples(*in.features, targets, refs);

            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = mix_seed(cfg.seed, 0xcf01d + static_cast<std::uint64_t>(f));
            Trainer trainer(fold_cfg);
            trainer.init_params();
            trainer.train(samples);

            BandRaster pred = predict_scene(trainer.generator(), *in.features, in.blend, in.patch,
                                            in.train_stride);
            const RasterGrid& grid_ref = pred.grid();
            double sq = 0.0;
            std::size_t n = 0;
            for (const auto& p : held_out) {
                if (!grid_ref.contains(p.x, p.y)) continue;
                const float v =
                    pred.at(0, grid_ref.row_of(p.y), grid_ref.col_of(p.x));
                if (std::isnan(v)) continue;
                const double r = static_cast<double>(v) - p.value;
                sq += r * r;
                ++n;
            }
            if (n == 0) throw ValidationError("no held-out plots fall inside the scene");
            entry.fold_rmse.push_back(std::sqrt(sq / static_cast<double>(n)));
        }
        double sum = 0.0;
        for (double v : entry.fold_rmse) sum += v;
        entry.mean_rmse = sum / static_cast<double>(entry.fold_rmse.size());
        auto sorted = entry.fold_rmse;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        entry.median_rmse = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        out.push_back(std::move(entry));
    }
    std::stable_sort(out.begin(), out.end(), [](const GridEntry& a, const GridEntry& b) {
        if (a.mean_rmse != b.mean_rmse) return a.mean_rmse < b.mean_rmse;
        return a.median_rmse < b.median_rmse;
    });
    return out;
}

}  // namespace forestreg
