#include "forestreg/dft.hpp"

#include <cmath>
#include <vector>

namespace forestreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// n x n table of exp(sign * 2*pi*i * j*k / n).
struct Twiddle {
    std::vector<double> re, im;
    int n = 0;

    Twiddle(int n_, double sign) : re(static_cast<std::size_t>(n_) * n_), im(re.size()), n(n_) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const double a = sign * 2.0 * kPi * (static_cast<double>(j) * k) / n;
                re[static_cast<std::size_t>(j) * n + k] = std::cos(a);
                im[static_cast<std::size_t>(j) * n + k] = std::sin(a);
            }
        }
    }
};

// Complex 2-D transform sum exp(sign*2*pi*i*(ur/H + vc/W)), rows first.
void cdft2(const double* xr, const double* xi, int h, int w, double sign, double* yr,
           double* yi) {
    const Twiddle tw(w, sign);
    const Twiddle th(h, sign);
    std::vector<double> tr(static_cast<std::size_t>(h) * w), ti(tr.size());
    // Transform rows.
    for (int r = 0; r < h; ++r) {
        const double* srcr = xr + static_cast<std::size_t>(r) * w;
        const double* srci = xi ? xi + static_cast<std::size_t>(r) * w : nullptr;
        double* dstr = tr.data() + static_cast<std::size_t>(r) * w;
        double* dsti = ti.data() + static_cast<std::size_t>(r) * w;
        for (int v = 0; v < w; ++v) {
            const double* cr = tw.re.data() + static_cast<std::size_t>(v) * w;
            const double* ci = tw.im.data() + static_cast<std::size_t>(v) * w;
            double ar = 0.0, ai = 0.0;
            for (int c = 0; c < w; ++c) {
                const double vr = srcr[c];
                const double vi = srci ? srci[c] : 0.0;
                ar += vr * cr[c] - vi * ci[c];
                ai += vr * ci[c] + vi * cr[c];
            }
            dstr[v] = ar;
            dsti[v] = ai;
        }
    }
    // Transform columns.
    for (int v = 0; v < w; ++v) {
        for (int u = 0; u < h; ++u) {
            const double* cr = th.re.data() + static_cast<std::size_t>(u) * h;
            const double* ci = th.im.data() + static_cast<std::size_t>(u) * h;
            double ar = 0.0, ai = 0.0;
            for (int r = 0; r < h; ++r) {
                const double vr = tr[static_cast<std::size_t>(r) * w + v];
                const double vi = ti[static_cast<std::size_t>(r) * w + v];
                ar += vr * cr[r] - vi * ci[r];
                ai += vr * ci[r] + vi * cr[r];
            }
            yr[static_cast<std::size_t>(u) * w + v] = ar;
            yi[static_cast<std::size_t>(u) * w + v] = ai;
        }
    }
}

}  // namespace

void dft2(const double* x, int h, int w, double* re, double* im) {
    if (h < 1 || w < 1) throw ValidationError("dft2: dims must be >= 1");
    cdft2(x, nullptr, h, w, -1.0, re, im);
}

void idft2(const double* re, const double* im, int h, int w, double* x) {
    std::vector<double> yr(static_cast<std::size_t>(h) * w), yi(yr.size());
    cdft2(re, im, h, w, 1.0, yr.data(), yi.data());
    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (std::size_t i = 0; i < yr.size(); ++i) x[i] = yr[i] * scale;
}

void dft2_adjoint(const double* g_re, const double* g_im, int h, int w, double* out) {
    std::vector<double> yr(static_cast<std::size_t>(h) * w), yi(yr.size());
    cdft2(g_re, g_im, h, w, 1.0, yr.data(), yi.data());
    for (std::size_t i = 0; i < yr.size(); ++i) out[i] = yr[i];
}

}  // namespace forestreg
