#include "forestreg/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "forestreg/discriminator.hpp"
#include "forestreg/generator.hpp"
#include "forestreg/losses.hpp"
#include "forestreg/rng.hpp"

namespace forestreg {

namespace {

using T = double;

struct Coord {
    double* slot;
    double analytic;
};

// Central differences with step scaled to the coordinate; coordinates where
// analytic and numeric agree to 1e-8 absolute count as exact (that is the
// resolution floor of the difference quotient itself).
GradCheckResult fd_check(const std::string& name, const std::function<double()>& value,
                         const std::vector<Coord>& coords, double tol) {
    GradCheckResult res{name, 0.0, tol, true, coords.size()};
    for (const Coord& c : coords) {
        const double orig = *c.slot;
        const double h = 1e-5 * std::max(1.0, std::abs(orig));
        *c.slot = orig + h;
        const double lp = value();
        *c.slot = orig - h;
        const double lm = value();
        *c.slot = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double diff = std::abs(c.analytic - numeric);
        if (diff <= 1e-8) continue;
        const double rel = diff / std::max({std::abs(c.analytic), std::abs(numeric), 1e-8});
        res.max_rel_err = std::max(res.max_rel_err, rel);
    }
    res.pass = res.max_rel_err <= tol;
    return res;
}

Tensor<T> rand_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(n, c, h, w);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// Keeps values away from piecewise-linear kinks at zero.
void avoid_zero(Tensor<T>& t, double margin = 2e-2) {
    for (auto& v : t.v)
        if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
}

// Separates the four values of each disjoint 2x2 pooling window so the
// argmax cannot flip inside the difference step.
void separate_pool_windows(Tensor<T>& t) {
    for (int ni = 0; ni < t.n; ++ni)
        for (int ci = 0; ci < t.c; ++ci)
            for (int r = 0; r + 1 < t.h; r += 2)
                for (int c = 0; c + 1 < t.w; c += 2) {
                    double* v[4] = {&t.at(ni, ci, r, c), &t.at(ni, ci, r, c + 1),
                                    &t.at(ni, ci, r + 1, c), &t.at(ni, ci, r + 1, c + 1)};
                    for (int i = 0; i < 4; ++i)
                        for (int j = 0; j < 4; ++j)
                            if (i != j && std::abs(*v[i] - *v[j]) < 1e-3)
                                *v[i] += *v[i] >= *v[j] ? 1e-3 : -1e-3;
                }
}

double dot(const Tensor<T>& a, const Tensor<T>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.v[i] * b.v[i];
    return acc;
}

void sample_coords(std::vector<Coord>& out, Rng& rng, double* base, const double* grads,
                   std::size_t count, std::size_t want) {
    if (count <= want) {
        for (std::size_t i = 0; i < count; ++i) out.push_back({base + i, grads[i]});
        return;
    }
    for (std::size_t s = 0; s < want; ++s) {
        const std::size_t i = rng.below(count);
        out.push_back({base + i, grads[i]});
    }
}

// Freshly initialised nets can land in degenerate probe states: conv biases
// start at zero, so any unit whose other inputs vanish sits exactly on the
// ReLU kink, and an unlucky weight draw can leave the whole output dead
// (a vacuous check). Re-draw the additive offsets (conv biases, norm shifts)
// away from zero and retry derived seeds until the output is demonstrably
// live.
template <typename Fwd>
void enliven(ParamList<T> ps, Fwd fwd, std::uint64_t seed) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Rng r(mix_seed(seed, 0xb1a5 + static_cast<std::uint64_t>(attempt)));
        for (auto* p : ps) {
            if (!p->trainable) continue;
            if (!(p->name.ends_with(".b") || p->name.ends_with(".beta"))) continue;
            for (auto& v : p->w.v) v = r.uniform(-0.5, 0.5);
            avoid_zero(p->w, 5e-2);
        }
        const Tensor<T> y = fwd();
        std::size_t live = 0;
        for (auto v : y.v)
            if (std::abs(v) > 1e-3) ++live;
        if (live * 20 >= y.numel()) return;
    }
    throw RuntimeError("gradcheck: could not find a live parameter draw");
}

// Checks d(sum r .* net(x))/d(x, params) for a layer-like object that
// exposes forward/backward and a parameter list.
template <typename Fwd, typename Bwd>
GradCheckResult check_net(const std::string& name, Rng& rng, Tensor<T>& x, ParamList<T> ps,
                          Fwd fwd, Bwd bwd, double tol, std::size_t input_coords,
                          std::size_t param_coords) {
    Tensor<T> y0 = fwd();
    Tensor<T> r = rand_tensor(rng, y0.n, y0.c, y0.h, y0.w);
    auto value = [&]() { return dot(fwd(), r); };
    for (auto* p : ps) p->g.zero();
    Tensor<T> dx = bwd(r);
    std::vector<Coord> coords;
    sample_coords(coords, rng, x.v.data(), dx.v.data(), x.numel(), input_coords);
    for (auto* p : ps) {
        if (!p->trainable) continue;
        sample_coords(coords, rng, p->w.v.data(), p->g.v.data(), p->w.numel(), param_coords);
    }
    return fd_check(name, value, coords, tol);
}

constexpr std::size_t kAll = static_cast<std::size_t>(-1);

}  // namespace

std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed) {
    std::vector<GradCheckResult> out;
    Rng rng(mix_seed(seed, 0x96ad));

    // --- convolutions ---
    {
        Conv2d<T> c("u", 2, 3, 3, 1, 1);
        c.init(rng);
        Tensor<T> x = rand_tensor(rng, 2, 2, 6, 6);
        out.push_back(check_net(
            "conv3x3_s1", rng, x, [&] { ParamList<T> ps; c.collect(ps); return ps; }(),
            [&] { return c.forward(x); }, [&](const Tensor<T>& r) { return c.backward(r); },
            1e-4, kAll, kAll));
    }
    {
        Conv2d<T> c("u", 2, 2, 4, 2, 1);
        c.init(rng);
        Tensor<T> x = rand_tensor(rng, 2, 2, 8, 8);
        out.push_back(check_net(
            "conv4x4_s2", rng, x, [&] { ParamList<T> ps; c.collect(ps); return ps; }(),
            [&] { return c.forward(x); }, [&](const Tensor<T>& r) { return c.backward(r); },
            1e-4, kAll, kAll));
    }
    {
        Conv2d<T> c("u", 3, 2, 1, 1, 0);
        c.init(rng);
        Tensor<T> x = rand_tensor(rng, 2, 3, 5, 5);
        out.push_back(check_net(
            "conv1x1_s1", rng, x, [&] { ParamList<T> ps; c.collect(ps); return ps; }(),
            [&] { return c.forward(x); }, [&](const Tensor<T>& r) { return c.backward(r); },
            1e-4, kAll, kAll));
    }
    {
        Conv2d<T> c("u", 2, 2, 7, 2, 3);
        c.init(rng);
        Tensor<T> x = rand_tensor(rng, 1, 2, 10, 10);
        out.push_back(check_net(
            "conv7x7_s2_p3", rng, x, [&] { ParamList<T> ps; c.collect(ps); return ps; }(),
            [&] { return c.forward(x); }, [&](const Tensor<T>& r) { return c.backward(r); },
            1e-4, kAll, kAll));
    }

    // --- activations, pooling, resampling ---
    {
        Activation<T> a(0.0);
        Tensor<T> x = rand_tensor(rng, 2, 3, 6, 6);
        avoid_zero(x);
        out.push_back(check_net(
            "relu", rng, x, ParamList<T>{}, [&] { return a.forward(x); },
            [&](const Tensor<T>& r) { return a.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        Activation<T> a(0.2);
        Tensor<T> x = rand_tensor(rng, 2, 3, 6, 6);
        avoid_zero(x);
        out.push_back(check_net(
            "leaky_relu", rng, x, ParamList<T>{}, [&] { return a.forward(x); },
            [&](const Tensor<T>& r) { return a.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        Sigmoid<T> a;
        Tensor<T> x = rand_tensor(rng, 2, 2, 5, 5, -3.0, 3.0);
        out.push_back(check_net(
            "sigmoid", rng, x, ParamList<T>{}, [&] { return a.forward(x); },
            [&](const Tensor<T>& r) { return a.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        MaxPool2<T> a;
        Tensor<T> x = rand_tensor(rng, 2, 2, 8, 8);
        separate_pool_windows(x);
        out.push_back(check_net(
            "maxpool2", rng, x, ParamList<T>{}, [&] { return a.forward(x); },
            [&](const Tensor<T>& r) { return a.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        NearestUp2<T> a;
        Tensor<T> x = rand_tensor(rng, 2, 2, 5, 5);
        out.push_back(check_net(
            "nearest_up2", rng, x, ParamList<T>{}, [&] { return a.forward(x); },
            [&](const Tensor<T>& r) { return a.backward(r); }, 1e-4, kAll, kAll));
    }

    // --- normalization ---
    for (NormKind kind : {NormKind::None, NormKind::Batch, NormKind::Instance}) {
        Norm<T> nm("n", kind, 3);
        Tensor<T> x = rand_tensor(rng, 2, 3, 6, 6);
        ParamList<T> ps;
        nm.collect(ps);
        out.push_back(check_net(
            std::string(norm_kind_name(kind)) + "_norm_train", rng, x, ps,
            [&] { return nm.forward(x); }, [&](const Tensor<T>& r) { return nm.backward(r); },
            1e-4, kAll, kAll));
        if (kind == NormKind::Batch) {
            nm.train_mode = false;
            Tensor<T> xe = rand_tensor(rng, 2, 3, 6, 6);
            out.push_back(check_net(
                "batch_norm_eval", rng, xe, ps, [&] { return nm.forward(xe); },
                [&](const Tensor<T>& r) { return nm.backward(r); }, 1e-4, kAll, kAll));
        }
    }

    // --- blocks ---
    {
        BasicBlock<T> blk("b", 3, 3, 1, NormKind::Instance);
        blk.init(rng);
        Tensor<T> x = rand_tensor(rng, 2, 3, 6, 6);
        ParamList<T> ps;
        blk.collect(ps);
        out.push_back(check_net(
            "basic_block_s1", rng, x, ps, [&] { return blk.forward(x); },
            [&](const Tensor<T>& r) { return blk.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        BasicBlock<T> blk("b", 2, 4, 2, NormKind::Instance);
        blk.init(rng);
        Tensor<T> x = rand_tensor(rng, 2, 2, 8, 8);
        ParamList<T> ps;
        blk.collect(ps);
        out.push_back(check_net(
            "basic_block_s2_proj", rng, x, ps, [&] { return blk.forward(x); },
            [&](const Tensor<T>& r) { return blk.backward(r); }, 1e-4, kAll, kAll));
    }
    {
        DecoderLevel<T> lvl("d", 4, 2, 3, NormKind::Instance);
        Rng lr(mix_seed(seed, 0x111));
        lvl.init(lr);
        Tensor<T> x = rand_tensor(rng, 1, 4, 4, 4);
        Tensor<T> skip = rand_tensor(rng, 1, 2, 8, 8);
        ParamList<T> ps;
        lvl.collect(ps);
        Tensor<T> d_skip;
        // Project both the decoder input and the skip connection.
        Tensor<T> y0 = lvl.forward(x, &skip);
        Tensor<T> r = rand_tensor(rng, y0.n, y0.c, y0.h, y0.w);
        auto value = [&] { return dot(lvl.forward(x, &skip), r); };
        for (auto* p : ps) p->g.zero();
        Tensor<T> dx = lvl.backward(r, &d_skip);
        std::vector<Coord> coords;
        sample_coords(coords, rng, x.v.data(), dx.v.data(), x.numel(), kAll);
        sample_coords(coords, rng, skip.v.data(), d_skip.v.data(), skip.numel(), kAll);
        for (auto* p : ps)
            if (p->trainable)
                sample_coords(coords, rng, p->w.v.data(), p->g.v.data(), p->w.numel(), kAll);
        out.push_back(fd_check("decoder_level", value, coords, 1e-4));
    }

    // --- end-to-end nets on sampled parameters ---
    {
        GeneratorConfig gc;
        gc.in_channels = 3;
        gc.depth = 4;
        gc.stem_width = 4;
        gc.norm = NormKind::Instance;
        GeneratorNet<T> gen(gc);
        gen.init(seed);
        Tensor<T> x = rand_tensor(rng, 1, 3, 32, 32);
        enliven(gen.params(), [&] { return gen.forward(x); }, seed);
        out.push_back(check_net(
            "generator_unet_d4", rng, x, gen.params(),
            [&] { return gen.forward(x); },
            [&](const Tensor<T>& r) {
                gen.forward(x);
                return gen.backward(r);
            },
            1e-3, 24, 4));
    }
    for (DiscVariant variant : {DiscVariant::PixelGAN, DiscVariant::PatchGAN16,
                                DiscVariant::PatchGAN34}) {
        DiscriminatorConfig dc;
        dc.in_channels = 4;
        dc.variant = variant;
        dc.width = 8;
        dc.norm = NormKind::Instance;
        DiscriminatorNet<T> disc(dc);
        disc.init(mix_seed(seed, 0x222));
        Tensor<T> x = rand_tensor(rng, 2, 4, 16, 16);
        enliven(disc.params(), [&] { return disc.forward(x); }, mix_seed(seed, 0x222));
        out.push_back(check_net(
            std::string("disc_") + disc_variant_name(variant), rng, x, disc.params(),
            [&] { return disc.forward(x); },
            [&](const Tensor<T>& r) {
                disc.forward(x);
                return disc.backward(r);
            },
            1e-3, 40, 16));
    }

    // --- loss terms: gradients with respect to the prediction/response ---
    auto check_loss = [&](const std::string& name, Tensor<T>& arg,
                          const std::function<double(Tensor<T>*)>& loss, double tol) {
        Tensor<T> grad = Tensor<T>::like(arg);
        loss(&grad);
        auto value = [&] { return loss(nullptr); };
        std::vector<Coord> coords;
        sample_coords(coords, rng, arg.v.data(), grad.v.data(), arg.numel(), kAll);
        out.push_back(fd_check(name, value, coords, tol));
    };

    {
        Tensor<T> y = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> yhat = rand_tensor(rng, 2, 1, 8, 8);
        check_loss("loss_l1", yhat,
                   [&](Tensor<T>* d) { return l1_loss(y, yhat, d); }, 1e-4);
        Tensor<T> mask(2, 1, 8, 8);
        for (auto& v : mask.v) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        check_loss("loss_masked_l1", yhat,
                   [&](Tensor<T>* d) { return masked_l1(y, yhat, mask, d); }, 1e-4);
        check_loss("loss_fft", yhat,
                   [&](Tensor<T>* d) { return fft_loss(y, yhat, d); }, 1e-4);
        check_loss("loss_masked_fft", yhat,
                   [&](Tensor<T>* d) { return masked_fft(y, yhat, mask, d); }, 1e-4);
    }
    {
        Tensor<T> df = rand_tensor(rng, 3, 1, 6, 6);
        check_loss("loss_lsgan_g", df,
                   [&](Tensor<T>* d) { return lsgan_g_loss(df, 1.0, d); }, 1e-4);
        Tensor<T> dr = rand_tensor(rng, 3, 1, 6, 6);
        check_loss("loss_lsgan_d_fake", df,
                   [&](Tensor<T>* d) { return lsgan_d_loss<T>(dr, df, 1.0, 0.0, nullptr, d); },
                   1e-4);
        check_loss("loss_lsgan_d_real", dr,
                   [&](Tensor<T>* d) { return lsgan_d_loss<T>(dr, df, 1.0, 0.0, d, nullptr); },
                   1e-4);
    }
    {
        Tensor<T> pf = rand_tensor(rng, 3, 1, 6, 6, 0.1, 0.9);
        Tensor<T> pr = rand_tensor(rng, 3, 1, 6, 6, 0.1, 0.9);
        check_loss("loss_vgan_g", pf,
                   [&](Tensor<T>* d) { return vgan_g_loss(pf, d); }, 1e-4);
        check_loss("loss_vgan_d_fake", pf,
                   [&](Tensor<T>* d) { return vgan_d_loss<T>(pr, pf, nullptr, d); }, 1e-4);
        check_loss("loss_vgan_d_real", pr,
                   [&](Tensor<T>* d) { return vgan_d_loss<T>(pr, pf, d, nullptr); }, 1e-4);
    }
    {
        // Composite generator objective with the discriminator response held
        // as the argument.
        Tensor<T> y = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> yhat = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> df = rand_tensor(rng, 2, 1, 8, 8);
        check_loss("loss_cgan_g_wrt_yhat", yhat,
                   [&](Tensor<T>* d) { return cgan_g_loss<T>(y, yhat, df, 0.01, 1.0, d, nullptr); },
                   1e-4);
        check_loss("loss_cgan_g_wrt_response", df,
                   [&](Tensor<T>* d) { return cgan_g_loss<T>(y, yhat, df, 0.01, 1.0, nullptr, d); },
                   1e-4);
    }
    {
        // Delta-decomposed composite (generator and discriminator sides),
        // differentiated against the prediction and each masked response.
        Tensor<T> y = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> yhat = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> m_gr(2, 1, 8, 8), m_pt(2, 1, 8, 8);
        for (auto& v : m_gr.v) v = rng.uniform() < 0.15 ? 1.0 : 0.0;
        for (auto& v : m_pt.v) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
        Tensor<T> d_gr = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> d_pt = rand_tensor(rng, 2, 1, 8, 8);
        LossConfig cfg;
        cfg.alpha = 0.01;
        cfg.gamma = 1e-7;
        cfg.delta = 200.0;
        cfg.gan_kind = GanKind::Lsgan;
        check_loss("loss_decomp_wrt_yhat", yhat,
                   [&](Tensor<T>* d) {
                       return decomposed_total(y, yhat, &d_gr, &d_pt, m_gr, m_pt, cfg, d).total;
                   },
                   1e-4);
        check_loss("loss_decomp_wrt_d_gr", d_gr,
                   [&](Tensor<T>* d) {
                       return decomposed_total<T>(y, yhat, &d_gr, &d_pt, m_gr, m_pt, cfg, nullptr, d)
                           .total;
                   },
                   1e-4);
        check_loss("loss_decomp_wrt_d_pt", d_pt,
                   [&](Tensor<T>* d) {
                       return decomposed_total<T>(y, yhat, &d_gr, &d_pt, m_gr, m_pt, cfg, nullptr,
                                                  nullptr, d)
                           .total;
                   },
                   1e-4);
        Tensor<T> dr_gr = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> df_gr = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> dr_pt = rand_tensor(rng, 2, 1, 8, 8);
        Tensor<T> df_pt = rand_tensor(rng, 2, 1, 8, 8);
        check_loss("loss_decomp_d_wrt_dr_gr", dr_gr,
                   [&](Tensor<T>* d) {
                       return decomposed_d_loss<T>(dr_gr, df_gr, dr_pt, df_pt, m_gr, m_pt, cfg, d)
                           .total;
                   },
                   1e-4);
        check_loss("loss_decomp_d_wrt_df_gr", df_gr,
                   [&](Tensor<T>* d) {
                       return decomposed_d_loss<T>(dr_gr, df_gr, dr_pt, df_pt, m_gr, m_pt, cfg,
                                                   nullptr, d)
                           .total;
                   },
                   1e-4);
        check_loss("loss_decomp_d_wrt_df_pt", df_pt,
                   [&](Tensor<T>* d) {
                       return decomposed_d_loss<T>(dr_gr, df_gr, dr_pt, df_pt, m_gr, m_pt, cfg,
                                                   nullptr, nullptr, nullptr, d)
                           .total;
                   },
                   1e-4);
    }

    return out;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results)
        if (!r.pass) return false;
    return !results.empty();
}

}  // namespace forestreg
