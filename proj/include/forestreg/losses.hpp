#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "forestreg/dft.hpp"
#include "forestreg/tensor.hpp"

namespace forestreg {

enum class GanKind { None, Vgan, Lsgan };

inline const char* gan_kind_name(GanKind k) {
    switch (k) {
        case GanKind::Vgan: return "vgan";
        case GanKind::Lsgan: return "lsgan";
        default: return "none";
    }
}

inline GanKind gan_kind_from(const std::string& s) {
    if (s == "vgan") return GanKind::Vgan;
    if (s == "lsgan") return GanKind::Lsgan;
    if (s == "none") return GanKind::None;
    throw ValidationError("unknown gan kind: " + s);
}

struct LossConfig {
    double alpha = 0.0;  // GAN weight
    double gamma = 0.0;  // FFT weight
    double delta = 1.0;  // true-target boost
    GanKind gan_kind = GanKind::None;
    double label_a = 0.0;  // fake
    double label_b = 1.0;  // real
    double label_c = 1.0;  // generator target

    void validate() const {
        if (alpha < 0.0 || gamma < 0.0) throw ValidationError("loss weights must be >= 0");
        if (delta < 1.0) throw ValidationError("delta must be >= 1");
    }

    double effective_alpha() const { return gan_kind == GanKind::None ? 0.0 : alpha; }
};

struct LossReport {
    double l1 = 0.0, gan_g = 0.0, gan_d = 0.0, fft = 0.0;
    double l1_gr = 0.0, l1_pt = 0.0;
    double fft_gr = 0.0, fft_pt = 0.0;
    double gan_gr = 0.0, gan_pt = 0.0;
    double total = 0.0;
};

// Mean absolute error: per-patch pixel mean, then mean over the k patches.
// If d_yhat is given, weight * dL/dyhat is accumulated into it.
template <typename T>
double l1_loss(const Tensor<T>& y, const Tensor<T>& yhat, Tensor<T>* d_yhat = nullptr,
               double weight = 1.0) {
    if (!y.same_shape(yhat)) throw ValidationError("l1: shape mismatch");
    const std::size_t per = static_cast<std::size_t>(y.c) * y.h * y.w;
    const double scale = 1.0 / (static_cast<double>(y.n) * static_cast<double>(per));
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double r = static_cast<double>(y.v[i]) - static_cast<double>(yhat.v[i]);
        acc += std::abs(r);
        if (d_yhat) {
            const double s = r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0);
            d_yhat->v[i] += static_cast<T>(weight * s * scale);
        }
    }
    return acc * scale;
}

// Eq.-11-style masked L1: residuals Hadamard-masked, normalization stays
// 1/(H*W) over all pixels.
template <typename T>
double masked_l1(const Tensor<T>& y, const Tensor<T>& yhat, const Tensor<T>& mask,
                 Tensor<T>* d_yhat = nullptr, double weight = 1.0) {
    if (!y.same_shape(yhat) || !y.same_shape(mask)) throw ValidationError("masked l1: shape mismatch");
    const std::size_t per = static_cast<std::size_t>(y.c) * y.h * y.w;
    const double scale = 1.0 / (static_cast<double>(y.n) * static_cast<double>(per));
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double m = static_cast<double>(mask.v[i]);
        const double r = m * (static_cast<double>(y.v[i]) - static_cast<double>(yhat.v[i]));
        acc += std::abs(r);
        if (d_yhat) {
            const double s = r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0);
            d_yhat->v[i] += static_cast<T>(weight * s * m * scale);
        }
    }
    return acc * scale;
}

namespace detail {
constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}
}  // namespace detail

// Vanilla GAN objectives on sigmoid probabilities in (0,1). D minimizes
// L_D = -E[log D(real)] - E[log(1 - D(fake))]; G uses the non-saturating
// form L_G = -E[log D(fake)]. Values outside (0,1) are clamped at 1e-7
// (zero gradient in the clamped region).
template <typename T>
double vgan_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake,
                   Tensor<T>* dd_real = nullptr, Tensor<T>* dd_fake = nullptr,
                   double weight = 1.0) {
    const double mr = 1.0 / static_cast<double>(d_real.numel());
    const double mf = 1.0 / static_cast<double>(d_fake.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < d_real.numel(); ++i) {
        const double p = static_cast<double>(d_real.v[i]);
        const double pc = detail::clamp_prob(p);
        acc -= std::log(pc) * mr;
        if (dd_real && p == pc) dd_real->v[i] += static_cast<T>(weight * (-1.0 / pc) * mr);
    }
    for (std::size_t i = 0; i < d_fake.numel(); ++i) {
        const double p = static_cast<double>(d_fake.v[i]);
        const double pc = detail::clamp_prob(p);
        acc -= std::log(1.0 - pc) * mf;
        if (dd_fake && p == pc) dd_fake->v[i] += static_cast<T>(weight * (1.0 / (1.0 - pc)) * mf);
    }
    return acc;
}

template <typename T>
double vgan_g_loss(const Tensor<T>& d_fake, Tensor<T>* dd_fake = nullptr, double weight = 1.0) {
    const double mf = 1.0 / static_cast<double>(d_fake.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < d_fake.numel(); ++i) {
        const double p = static_cast<double>(d_fake.v[i]);
        const double pc = detail::clamp_prob(p);
        acc -= std::log(pc) * mf;
        if (dd_fake && p == pc) dd_fake->v[i] += static_cast<T>(weight * (-1.0 / pc) * mf);
    }
    return acc;
}

// LSGAN on raw responses: L_D = 1/2 E[(D(real)-b)^2] + 1/2 E[(D(fake)-a)^2],
// L_G = 1/2 E[(D(fake)-c)^2]; expectations are means over response units and
// batch. The `active` flags (one per batch sample) zero per-patch terms whose
// mask is empty; the per-patch mean convention keeps all-active equal to the
// plain batch mean.
template <typename T>
double lsgan_g_loss(const Tensor<T>& d_fake, double c, Tensor<T>* dd_fake = nullptr,
                    double weight = 1.0, const std::vector<char>* active = nullptr) {
    const std::size_t per = static_cast<std::size_t>(d_fake.c) * d_fake.h * d_fake.w;
    const double scale = 1.0 / (static_cast<double>(d_fake.n) * static_cast<double>(per));
    double acc = 0.0;
    for (int ni = 0; ni < d_fake.n; ++ni) {
        if (active && !(*active)[static_cast<std::size_t>(ni)]) continue;
        const T* p = d_fake.plane(ni, 0);
        T* g = dd_fake ? dd_fake->plane(ni, 0) : nullptr;
        for (std::size_t e = 0; e < per; ++e) {
            const double r = static_cast<double>(p[e]) - c;
            acc += 0.5 * r * r * scale;
            if (g) g[e] += static_cast<T>(weight * r * scale);
        }
    }
    return acc;
}

template <typename T>
double lsgan_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, double b, double a,
                    Tensor<T>* dd_real = nullptr, Tensor<T>* dd_fake = nullptr,
                    double weight = 1.0, const std::vector<char>* active = nullptr) {
    if (!d_real.same_shape(d_fake)) throw ValidationError("lsgan_d: shape mismatch");
    return lsgan_g_loss(d_real, b, dd_real, weight, active) +
           lsgan_g_loss(d_fake, a, dd_fake, weight, active);
}

// Eq.-9 spectral loss: squared real and imaginary DFT residuals summed over
// frequency bins, mean over the k patches. Transforms run in double.
template <typename T>
double fft_loss(const Tensor<T>& y, const Tensor<T>& yhat, Tensor<T>* d_yhat = nullptr,
                double weight = 1.0, const Tensor<T>* mask = nullptr) {
    if (!y.same_shape(yhat)) throw ValidationError("fft: shape mismatch");
    if (mask && !y.same_shape(*mask)) throw ValidationError("fft: mask shape mismatch");
    const int hh = y.h, ww = y.w;
    const std::size_t plane = static_cast<std::size_t>(hh) * ww;
    std::vector<double> py(plane), ph(plane), yr(plane), yi(plane), hr(plane), hi(plane);
    std::vector<double> gr(plane), gi(plane), adj(plane);
    const double kinv = 1.0 / static_cast<double>(y.n);
    double acc = 0.0;
    for (int ni = 0; ni < y.n; ++ni) {
        for (int ci = 0; ci < y.c; ++ci) {
            const T* yp = y.plane(ni, ci);
            const T* hp = yhat.plane(ni, ci);
            const T* mp = mask ? mask->plane(ni, ci) : nullptr;
            bool any = false;
            for (std::size_t e = 0; e < plane; ++e) {
                const double m = mp ? static_cast<double>(mp[e]) : 1.0;
                py[e] = m * static_cast<double>(yp[e]);
                ph[e] = m * static_cast<double>(hp[e]);
                if (m != 0.0) any = true;
            }
            if (!any) continue;  // all-zero planes transform to zero exactly
            dft2(py.data(), hh, ww, yr.data(), yi.data());
            dft2(ph.data(), hh, ww, hr.data(), hi.data());
            double patch = 0.0;
            for (std::size_t e = 0; e < plane; ++e) {
                const double dre = yr[e] - hr[e];
                const double dim = yi[e] - hi[e];
                patch += dre * dre + dim * dim;
                gr[e] = -2.0 * dre;
                gi[e] = -2.0 * dim;
            }
            acc += patch * kinv;
            if (d_yhat) {
                dft2_adjoint(gr.data(), gi.data(), hh, ww, adj.data());
                T* g = d_yhat->plane(ni, ci);
                for (std::size_t e = 0; e < plane; ++e) {
                    const double m = mp ? static_cast<double>(mp[e]) : 1.0;
                    g[e] += static_cast<T>(weight * kinv * m * adj[e]);
                }
            }
        }
    }
    return acc;
}

template <typename T>
double masked_fft(const Tensor<T>& y, const Tensor<T>& yhat, const Tensor<T>& mask,
                  Tensor<T>* d_yhat = nullptr, double weight = 1.0) {
    return fft_loss(y, yhat, d_yhat, weight, &mask);
}

// Eq. 8: L1 plus alpha-weighted LSGAN generator term.
template <typename T>
double cgan_g_loss(const Tensor<T>& y, const Tensor<T>& yhat, const Tensor<T>& d_fake,
                   double alpha, double label_c = 1.0, Tensor<T>* d_yhat = nullptr,
                   Tensor<T>* dd_fake = nullptr) {
    return l1_loss(y, yhat, d_yhat) + alpha * lsgan_g_loss(d_fake, label_c, dd_fake, alpha);
}

// Per-sample flags marking patches whose mask has at least one nonzero pixel.
template <typename T>
std::vector<char> mask_active_flags(const Tensor<T>& mask) {
    std::vector<char> out(static_cast<std::size_t>(mask.n), 0);
    const std::size_t per = static_cast<std::size_t>(mask.c) * mask.h * mask.w;
    for (int ni = 0; ni < mask.n; ++ni) {
        const T* p = mask.plane(ni, 0);
        for (std::size_t e = 0; e < per; ++e)
            if (p[e] != T(0)) {
                out[static_cast<std::size_t>(ni)] = 1;
                break;
            }
    }
    return out;
}

template <typename T>
double gan_g_term(const LossConfig& cfg, const Tensor<T>& d_fake, Tensor<T>* dd_fake,
                  double weight, const std::vector<char>* active = nullptr) {
    switch (cfg.gan_kind) {
        case GanKind::Lsgan:
            return lsgan_g_loss(d_fake, cfg.label_c, dd_fake, weight, active);
        case GanKind::Vgan: {
            // Per-patch zeroing for the masked variant mirrors the LSGAN path.
            if (!active) return vgan_g_loss(d_fake, dd_fake, weight);
            double acc = 0.0;
            const std::size_t per = static_cast<std::size_t>(d_fake.c) * d_fake.h * d_fake.w;
            const double scale = 1.0 / (static_cast<double>(d_fake.n) * static_cast<double>(per));
            for (int ni = 0; ni < d_fake.n; ++ni) {
                if (!(*active)[static_cast<std::size_t>(ni)]) continue;
                const T* p = d_fake.plane(ni, 0);
                T* g = dd_fake ? dd_fake->plane(ni, 0) : nullptr;
                for (std::size_t e = 0; e < per; ++e) {
                    const double pv = static_cast<double>(p[e]);
                    const double pc = detail::clamp_prob(pv);
                    acc -= std::log(pc) * scale;
                    if (g && pv == pc) g[e] += static_cast<T>(weight * (-1.0 / pc) * scale);
                }
            }
            return acc;
        }
        default:
            return 0.0;
    }
}

// Eq. 10: L1 + alpha * GAN + gamma * FFT (unmasked form).
template <typename T>
LossReport total_loss(const Tensor<T>& y, const Tensor<T>& yhat, const Tensor<T>* d_fake,
                      const LossConfig& cfg, Tensor<T>* d_yhat = nullptr,
                      Tensor<T>* dd_fake = nullptr) {
    cfg.validate();
    LossReport rep;
    rep.l1 = l1_loss(y, yhat, d_yhat);
    const double a = cfg.effective_alpha();
    if (a > 0.0) {
        if (!d_fake) throw ValidationError("total_loss: GAN term enabled without responses");
        rep.gan_g = gan_g_term(cfg, *d_fake, dd_fake, a, nullptr);
    }
    if (cfg.gamma > 0.0) rep.fft = fft_loss(y, yhat, d_yhat, cfg.gamma);
    rep.total = rep.l1 + a * rep.gan_g + cfg.gamma * rep.fft;
    return rep;
}

// Eq. 12: delta-boosted decomposition over the ground-reference and
// pseudo-target masks. d_gr / d_pt are discriminator responses on the
// correspondingly masked fake pairs; per-patch GAN terms with an empty mask
// contribute zero.
template <typename T>
LossReport decomposed_total(const Tensor<T>& y, const Tensor<T>& yhat, const Tensor<T>* d_gr,
                            const Tensor<T>* d_pt, const Tensor<T>& m_gr, const Tensor<T>& m_pt,
                            const LossConfig& cfg, Tensor<T>* d_yhat = nullptr,
                            Tensor<T>* dd_gr = nullptr, Tensor<T>* dd_pt = nullptr) {
    cfg.validate();
    LossReport rep;
    rep.l1_gr = masked_l1(y, yhat, m_gr, d_yhat, cfg.delta);
    rep.l1_pt = masked_l1(y, yhat, m_pt, d_yhat, 1.0);
    if (cfg.gamma > 0.0) {
        rep.fft_gr = masked_fft(y, yhat, m_gr, d_yhat, cfg.gamma * cfg.delta);
        rep.fft_pt = masked_fft(y, yhat, m_pt, d_yhat, cfg.gamma);
    }
    const double a = cfg.effective_alpha();
    if (a > 0.0) {
        if (!d_gr || !d_pt) throw ValidationError("decomposed_total: GAN term without responses");
        const auto act_gr = mask_active_flags(m_gr);
        const auto act_pt = mask_active_flags(m_pt);
        rep.gan_gr = gan_g_term(cfg, *d_gr, dd_gr, a * cfg.delta, &act_gr);
        rep.gan_pt = gan_g_term(cfg, *d_pt, dd_pt, a, &act_pt);
    }
    rep.l1 = cfg.delta * rep.l1_gr + rep.l1_pt;
    rep.fft = cfg.delta * rep.fft_gr + rep.fft_pt;
    rep.gan_g = cfg.delta * rep.gan_gr + rep.gan_pt;
    rep.total = rep.l1 + cfg.gamma * rep.fft + a * rep.gan_g;
    return rep;
}

template <typename T>
double vgan_d_active(const Tensor<T>& d_real, const Tensor<T>& d_fake,
                     const std::vector<char>& active, Tensor<T>* dd_real, Tensor<T>* dd_fake,
                     double weight) {
    const std::size_t per = static_cast<std::size_t>(d_real.c) * d_real.h * d_real.w;
    const double scale = 1.0 / (static_cast<double>(d_real.n) * static_cast<double>(per));
    double acc = 0.0;
    for (int ni = 0; ni < d_real.n; ++ni) {
        if (!active[static_cast<std::size_t>(ni)]) continue;
        const T* pr = d_real.plane(ni, 0);
        const T* pf = d_fake.plane(ni, 0);
        T* gr = dd_real ? dd_real->plane(ni, 0) : nullptr;
        T* gf = dd_fake ? dd_fake->plane(ni, 0) : nullptr;
        for (std::size_t e = 0; e < per; ++e) {
            const double prv = static_cast<double>(pr[e]), prc = detail::clamp_prob(prv);
            const double pfv = static_cast<double>(pf[e]), pfc = detail::clamp_prob(pfv);
            acc -= (std::log(prc) + std::log(1.0 - pfc)) * scale;
            if (gr && prv == prc) gr[e] += static_cast<T>(weight * (-1.0 / prc) * scale);
            if (gf && pfv == pfc) gf[e] += static_cast<T>(weight * (1.0 / (1.0 - pfc)) * scale);
        }
    }
    return acc;
}

// Discriminator side of Eq. 12: delta * L_D^gr + L_D^pt, patches with empty
// masks skipped. Responses come from masked (real, fake) pairs.
template <typename T>
LossReport decomposed_d_loss(const Tensor<T>& dr_gr, const Tensor<T>& df_gr,
                             const Tensor<T>& dr_pt, const Tensor<T>& df_pt,
                             const Tensor<T>& m_gr, const Tensor<T>& m_pt, const LossConfig& cfg,
                             Tensor<T>* ddr_gr = nullptr, Tensor<T>* ddf_gr = nullptr,
                             Tensor<T>* ddr_pt = nullptr, Tensor<T>* ddf_pt = nullptr) {
    cfg.validate();
    const auto act_gr = mask_active_flags(m_gr);
    const auto act_pt = mask_active_flags(m_pt);
    LossReport rep;
    double gr = 0.0, pt = 0.0;
    if (cfg.gan_kind == GanKind::Lsgan) {
        gr = lsgan_d_loss(dr_gr, df_gr, cfg.label_b, cfg.label_a, ddr_gr, ddf_gr, cfg.delta,
                          &act_gr);
        pt = lsgan_d_loss(dr_pt, df_pt, cfg.label_b, cfg.label_a, ddr_pt, ddf_pt, 1.0, &act_pt);
    } else if (cfg.gan_kind == GanKind::Vgan) {
        gr = vgan_d_active(dr_gr, df_gr, act_gr, ddr_gr, ddf_gr, cfg.delta);
        pt = vgan_d_active(dr_pt, df_pt, act_pt, ddr_pt, ddf_pt, 1.0);
    }
    rep.gan_gr = gr;
    rep.gan_pt = pt;
    rep.gan_d = cfg.delta * gr + pt;
    rep.total = rep.gan_d;
    return rep;
}

}  // namespace forestreg
