#include <doctest.h>

#include <cmath>

#include "forestreg/losses.hpp"

using namespace forestreg;

namespace {

// Fixed dyadic-valued tensors; the reference values below were computed
// independently for exactly these generators.
template <typename T>
Tensor<T> fill(int n, int c, int h, int w, T (*f)(std::size_t)) {
    Tensor<T> t(n, c, h, w);
    for (std::size_t i = 0; i < t.numel(); ++i) t.v[i] = f(i);
    return t;
}

template <typename T>
struct Fixture {
    Tensor<T> y = fill<T>(2, 1, 4, 4, [](std::size_t i) {
        return static_cast<T>((static_cast<int>(i * 7 % 23) - 11) / 8.0);
    });
    Tensor<T> yhat = fill<T>(2, 1, 4, 4, [](std::size_t i) {
        return static_cast<T>((static_cast<int>((i * 5 + 3) % 19) - 9) / 8.0);
    });
    Tensor<T> m_gr = fill<T>(2, 1, 4, 4, [](std::size_t i) {
        return static_cast<T>(i < 16 && i * 3 % 5 == 0 ? 1.0 : 0.0);  // patch 1 empty
    });
    Tensor<T> m_pt = fill<T>(2, 1, 4, 4, [](std::size_t i) {
        return static_cast<T>((i * 2 + 1) % 3 == 0 ? 1.0 : 0.0);
    });
    Tensor<T> d_gr = fill<T>(2, 1, 2, 2, [](std::size_t i) {
        return static_cast<T>((static_cast<int>(i * 11 % 13) - 6) / 4.0);
    });
    Tensor<T> d_pt = fill<T>(2, 1, 2, 2, [](std::size_t i) {
        return static_cast<T>((static_cast<int>((i * 9 + 2) % 11) - 5) / 4.0);
    });
    Tensor<T> dr_gr = fill<T>(2, 1, 2, 2, [](std::size_t i) {
        return static_cast<T>((static_cast<int>((i * 13 + 1) % 17) - 8) / 4.0);
    });
    Tensor<T> dr_pt = fill<T>(2, 1, 2, 2, [](std::size_t i) {
        return static_cast<T>((static_cast<int>((i * 3 + 2) % 15) - 7) / 4.0);
    });
};

constexpr double kL1Gr = 0.12109375;
constexpr double kL1Pt = 0.2421875;
constexpr double kFftGr = 45.375;
constexpr double kFftPt = 82.75;
constexpr double kGanGr = 0.43359375;   // lsgan G, patch 2 inactive
constexpr double kGanPt = 0.98046875;
constexpr double kDGr = 0.921875;       // lsgan D on the gr-side responses
constexpr double kDPt = 1.40625;

}  // namespace

TEST_CASE("masked L1 keeps the full-patch normalization") {
    Fixture<double> f;
    CHECK(std::abs(masked_l1(f.y, f.yhat, f.m_gr) - kL1Gr) <= 1e-12);
    CHECK(std::abs(masked_l1(f.y, f.yhat, f.m_pt) - kL1Pt) <= 1e-12);
    CHECK(std::abs(l1_loss(f.y, f.yhat) - 0.69921875) <= 1e-12);

    const Tensor<double> zero = fill<double>(2, 1, 4, 4, [](std::size_t) { return 0.0; });
    CHECK(masked_l1(f.y, f.yhat, zero) == 0.0);

    Tensor<double> bad(1, 1, 4, 4);
    CHECK_THROWS_AS(masked_l1(f.y, bad, f.m_gr), ValidationError);
}

TEST_CASE("masked L1 gradient scales with the weight") {
    Fixture<double> f;
    Tensor<double> g1 = Tensor<double>::like(f.yhat);
    Tensor<double> g500 = Tensor<double>::like(f.yhat);
    masked_l1(f.y, f.yhat, f.m_gr, &g1, 1.0);
    masked_l1(f.y, f.yhat, f.m_gr, &g500, 500.0);
    for (std::size_t i = 0; i < g1.numel(); ++i)
        CHECK(std::abs(g500.v[i] - 500.0 * g1.v[i]) <= 1e-12);
    // Gradient lives only under the mask.
    for (std::size_t i = 0; i < g1.numel(); ++i)
        if (f.m_gr.v[i] == 0.0) CHECK(g1.v[i] == 0.0);
}

TEST_CASE("spectral loss matches the DFT oracle") {
    Fixture<double> f;
    CHECK(std::abs(masked_fft(f.y, f.yhat, f.m_gr) - kFftGr) <= 1e-10);
    CHECK(std::abs(masked_fft(f.y, f.yhat, f.m_pt) - kFftPt) <= 1e-10);
    CHECK(std::abs(fft_loss(f.y, f.yhat) - 214.625) <= 1e-10);

    const Tensor<double> zero = fill<double>(2, 1, 4, 4, [](std::size_t) { return 0.0; });
    CHECK(masked_fft(f.y, f.yhat, zero) == 0.0);
}

TEST_CASE("lsgan objectives honour the label convention") {
    Fixture<double> f;
    const std::vector<char> act_gr = mask_active_flags(f.m_gr);
    const std::vector<char> act_pt = mask_active_flags(f.m_pt);
    CHECK(act_gr == std::vector<char>{1, 0});
    CHECK(act_pt == std::vector<char>{1, 1});

    CHECK(std::abs(lsgan_g_loss<double>(f.d_gr, 1.0, nullptr, 1.0, &act_gr) - kGanGr) <= 1e-12);
    CHECK(std::abs(lsgan_g_loss<double>(f.d_pt, 1.0, nullptr, 1.0, &act_pt) - kGanPt) <= 1e-12);
    CHECK(std::abs(lsgan_d_loss<double>(f.dr_gr, f.d_gr, 1.0, 0.0, nullptr, nullptr, 1.0,
                                        &act_gr) -
                   kDGr) <= 1e-12);
    CHECK(std::abs(lsgan_d_loss<double>(f.dr_pt, f.d_pt, 1.0, 0.0, nullptr, nullptr, 1.0,
                                        &act_pt) -
                   kDPt) <= 1e-12);

    // Responses sitting exactly on their labels cost nothing.
    const Tensor<double> real = fill<double>(2, 1, 2, 2, [](std::size_t) { return 1.0; });
    const Tensor<double> fake = fill<double>(2, 1, 2, 2, [](std::size_t) { return 0.0; });
    CHECK(lsgan_d_loss<double>(real, fake, 1.0, 0.0) == 0.0);
    CHECK(lsgan_g_loss<double>(real, 1.0) == 0.0);
}

TEST_CASE("vanilla GAN objectives clamp and stay finite") {
    const Tensor<double> p_fake = fill<double>(2, 1, 2, 2, [](std::size_t i) {
        return (1.0 + static_cast<double>(i * 7 % 14)) / 16.0;
    });
    const Tensor<double> p_real = fill<double>(2, 1, 2, 2, [](std::size_t i) {
        return (1.0 + static_cast<double>((i * 5 + 3) % 14)) / 16.0;
    });
    CHECK(std::abs(vgan_g_loss(p_fake) - 1.7328679513998633) <= 1e-12);
    CHECK(std::abs(vgan_d_loss(p_real, p_fake) - 1.360899821147797) <= 1e-12);

    // Saturated probabilities: finite loss, zero gradient in the clamp.
    const Tensor<double> sat = fill<double>(1, 1, 2, 2, [](std::size_t i) {
        return i % 2 == 0 ? 0.0 : 1.0;
    });
    Tensor<double> grad = Tensor<double>::like(sat);
    const double v = vgan_g_loss(sat, &grad);
    CHECK(std::isfinite(v));
    for (std::size_t i = 0; i < sat.numel(); ++i) CHECK(grad.v[i] == 0.0);
}

TEST_CASE("cgan generator objective composes L1 and the GAN term") {
    Fixture<double> f;
    const double got = cgan_g_loss(f.y, f.yhat, f.d_pt, 0.01);
    CHECK(std::abs(got - (0.69921875 + 0.01 * kGanPt)) <= 1e-12);
}

TEST_CASE("decomposed total matches the oracle across the weight grid") {
    Fixture<double> f;
    const double alphas[] = {0.0, 0.01};
    const double gammas[] = {0.0, 1e-7};
    const double deltas[] = {1.0, 200.0, 500.0};
    // Totals for (alpha, gamma, delta) in row-major order of the loops below.
    const double expected[2][2][3] = {
        {{0.36328125, 24.4609375, 60.7890625},
         {0.3632940625, 24.461853275, 60.791339525}},
        {{0.377421875, 25.3379296875, 62.9668359375},
         {0.37743468750000003, 25.3388454625, 62.9691129625}},
    };

    for (int ai = 0; ai < 2; ++ai)
        for (int gi = 0; gi < 2; ++gi)
            for (int di = 0; di < 3; ++di) {
                LossConfig cfg;
                cfg.alpha = alphas[ai];
                cfg.gamma = gammas[gi];
                cfg.delta = deltas[di];
                cfg.gan_kind = cfg.alpha > 0.0 ? GanKind::Lsgan : GanKind::None;
                const LossReport rep = decomposed_total(f.y, f.yhat, &f.d_gr, &f.d_pt, f.m_gr,
                                                        f.m_pt, cfg);
                const double tol = cfg.gamma > 0.0 ? 1e-10 : 1e-12;
                CHECK(std::abs(rep.total - expected[ai][gi][di]) <= tol);
                CHECK(std::abs(rep.l1 - (cfg.delta * kL1Gr + kL1Pt)) <= 1e-12);
                if (cfg.gamma > 0.0)
                    CHECK(std::abs(rep.fft - (cfg.delta * kFftGr + kFftPt)) <= 1e-10);
                else
                    CHECK(rep.fft == 0.0);
                if (cfg.alpha > 0.0)
                    CHECK(std::abs(rep.gan_g - (cfg.delta * kGanGr + kGanPt)) <= 1e-12);
                else
                    CHECK(rep.gan_g == 0.0);
            }
}

TEST_CASE("decomposed discriminator loss applies the delta boost") {
    Fixture<double> f;
    for (double delta : {1.0, 200.0, 500.0}) {
        LossConfig cfg;
        cfg.alpha = 0.01;
        cfg.delta = delta;
        cfg.gan_kind = GanKind::Lsgan;
        const LossReport rep = decomposed_d_loss(f.dr_gr, f.d_gr, f.dr_pt, f.d_pt, f.m_gr,
                                                 f.m_pt, cfg);
        CHECK(std::abs(rep.gan_d - (delta * kDGr + kDPt)) <= 1e-12);
        CHECK(std::abs(rep.gan_gr - kDGr) <= 1e-12);
        CHECK(std::abs(rep.gan_pt - kDPt) <= 1e-12);
    }
}

TEST_CASE("empty masks silence their side entirely") {
    Fixture<double> f;
    const Tensor<double> zero = fill<double>(2, 1, 4, 4, [](std::size_t) { return 0.0; });
    LossConfig cfg;
    cfg.alpha = 0.01;
    cfg.gamma = 1e-7;
    cfg.delta = 500.0;
    cfg.gan_kind = GanKind::Lsgan;
    const LossReport rep =
        decomposed_total(f.y, f.yhat, &f.d_gr, &f.d_pt, zero, f.m_pt, cfg);
    CHECK(rep.l1_gr == 0.0);
    CHECK(rep.fft_gr == 0.0);
    CHECK(rep.gan_gr == 0.0);
    CHECK(std::abs(rep.l1_pt - kL1Pt) <= 1e-12);
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    cfg.delta = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.delta = 1.0;
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.alpha = 0.5;
    CHECK(cfg.effective_alpha() == 0.0);  // gan_kind none
    cfg.gan_kind = GanKind::Lsgan;
    CHECK(cfg.effective_alpha() == 0.5);

    CHECK(gan_kind_from("lsgan") == GanKind::Lsgan);
    CHECK(gan_kind_from("vgan") == GanKind::Vgan);
    CHECK_THROWS_AS(gan_kind_from("wgan"), ValidationError);
}

TEST_CASE("float instantiation agrees with the double oracle") {
    Fixture<float> f;
    CHECK(masked_l1(f.y, f.yhat, f.m_gr) == doctest::Approx(kL1Gr).epsilon(1e-5));
    CHECK(masked_fft(f.y, f.yhat, f.m_pt) == doctest::Approx(kFftPt).epsilon(1e-5));
    LossConfig cfg;
    cfg.delta = 200.0;
    const LossReport rep =
        decomposed_total<float>(f.y, f.yhat, nullptr, nullptr, f.m_gr, f.m_pt, cfg);
    CHECK(rep.total == doctest::Approx(24.4609375).epsilon(1e-5));
}
