#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "forestreg/rng.hpp"
#include "forestreg/tensor.hpp"

namespace forestreg {

enum class NormKind { None, Batch, Instance };

inline const char* norm_kind_name(NormKind k) {
    switch (k) {
        case NormKind::Batch: return "batch";
        case NormKind::Instance: return "instance";
        default: return "none";
    }
}

inline NormKind norm_kind_from(const std::string& s) {
    if (s == "batch") return NormKind::Batch;
    if (s == "instance") return NormKind::Instance;
    if (s == "none") return NormKind::None;
    throw ValidationError("unknown norm kind: " + s);
}

// A named tensor owned by a layer: value + gradient. Buffers (running
// statistics) are checkpointed but not optimized.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> w;
    Tensor<T> g;
    bool trainable = true;

    void resize(int n, int c, int h, int wd) {
        w = Tensor<T>(n, c, h, wd);
        g = Tensor<T>(n, c, h, wd);
    }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// 2-D convolution via im2col + GEMM. Weight layout [out_c, in_c, k, k].
template <typename T>
struct Conv2d {
    int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
    Param<T> w, b;

    Conv2d() = default;
    Conv2d(std::string name, int in_c_, int out_c_, int k_, int stride_, int pad_)
        : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
        w.name = name + ".w";
        b.name = name + ".b";
        w.resize(out_c, in_c, k, k);
        b.resize(1, out_c, 1, 1);
    }

    // Fan-in-scaled zero-mean Gaussian weights, zero biases.
    void init(Rng& rng) {
        const double fan_in = static_cast<double>(in_c) * k * k;
        const double s = std::sqrt(2.0 / fan_in);
        for (auto& v : w.w.v) v = static_cast<T>(rng.normal() * s);
        b.w.zero();
    }

    int out_dim(int d) const { return (d + 2 * pad - k) / stride + 1; }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != in_c) throw ValidationError("conv2d: channel mismatch");
        x_ = x;
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        if (oh < 1 || ow < 1) throw ValidationError("conv2d: output would be empty");
        Tensor<T> y(x.n, out_c, oh, ow);
        const int q = in_c * k * k, len = oh * ow;
        cols_.resize(static_cast<std::size_t>(q) * len);
        for (int ni = 0; ni < x.n; ++ni) {
            im2col(x, ni, oh, ow);
            T* ymat = y.plane(ni, 0);
            gemm_accum<T>(w.w.v.data(), cols_.data(), ymat, out_c, q, len);
            for (int oc = 0; oc < out_c; ++oc) {
                const T bias = b.w.v[static_cast<std::size_t>(oc)];
                T* row = ymat + static_cast<std::size_t>(oc) * len;
                for (int l = 0; l < len; ++l) row[l] += bias;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int oh = dy.h, ow = dy.w, len = oh * ow, q = in_c * k * k;
        Tensor<T> dx = Tensor<T>::like(x_);
        dcols_.assign(static_cast<std::size_t>(q) * len, T(0));
        for (int ni = 0; ni < x_.n; ++ni) {
            const T* dymat = dy.plane(ni, 0);
            for (int oc = 0; oc < out_c; ++oc) {
                const T* row = dymat + static_cast<std::size_t>(oc) * len;
                T acc = T(0);
                for (int l = 0; l < len; ++l) acc += row[l];
                b.g.v[static_cast<std::size_t>(oc)] += acc;
            }
            im2col(x_, ni, oh, ow);
            gemm_accum_nt<T>(dymat, cols_.data(), w.g.v.data(), out_c, len, q);
            std::fill(dcols_.begin(), dcols_.end(), T(0));
            gemm_accum_tn<T>(w.w.v.data(), dymat, dcols_.data(), q, out_c, len);
            col2im(dx, ni, oh, ow);
        }
        return dx;
    }

    void collect(ParamList<T>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }

private:
    Tensor<T> x_;
    std::vector<T> cols_, dcols_;

    void im2col(const Tensor<T>& x, int ni, int oh, int ow) {
        const int len = oh * ow;
        std::size_t qi = 0;
        for (int ci = 0; ci < in_c; ++ci) {
            const T* plane = x.plane(ni, ci);
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj, ++qi) {
                    T* dst = cols_.data() + qi * len;
                    for (int r = 0; r < oh; ++r) {
                        const int sr = r * stride - pad + ki;
                        if (sr < 0 || sr >= x.h) {
                            for (int c = 0; c < ow; ++c) dst[r * ow + c] = T(0);
                            continue;
                        }
                        const T* srow = plane + static_cast<std::size_t>(sr) * x.w;
                        for (int c = 0; c < ow; ++c) {
                            const int sc = c * stride - pad + kj;
                            dst[r * ow + c] = (sc < 0 || sc >= x.w) ? T(0) : srow[sc];
                        }
                    }
                }
            }
        }
    }

    void col2im(Tensor<T>& dx, int ni, int oh, int ow) {
        const int len = oh * ow;
        std::size_t qi = 0;
        for (int ci = 0; ci < in_c; ++ci) {
            T* plane = dx.plane(ni, ci);
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj, ++qi) {
                    const T* src = dcols_.data() + qi * len;
                    for (int r = 0; r < oh; ++r) {
                        const int sr = r * stride - pad + ki;
                        if (sr < 0 || sr >= dx.h) continue;
                        T* drow = plane + static_cast<std::size_t>(sr) * dx.w;
                        for (int c = 0; c < ow; ++c) {
                            const int sc = c * stride - pad + kj;
                            if (sc >= 0 && sc < dx.w) drow[sc] += src[r * ow + c];
                        }
                    }
                }
            }
        }
    }
};

// ReLU (slope 0) or leaky ReLU. Derivative at exactly 0 uses the leak.
template <typename T>
struct Activation {
    T slope = T(0);

    Activation() = default;
    explicit Activation(T slope_) : slope(slope_) {}

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y = x;
        for (auto& v : y.v)
            if (v <= T(0)) v *= slope;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (x_.v[i] <= T(0)) dx.v[i] *= slope;
        return dx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
struct Sigmoid {
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = x;
        for (auto& v : y_.v) v = T(1) / (T(1) + std::exp(-v));
        return y_;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= y_.v[i] * (T(1) - y_.v[i]);
        return dx;
    }

private:
    Tensor<T> y_;
};

// 2x2 max pooling, stride 2. Ties resolve to the first element in scan
// order, so the backward scatter is deterministic.
template <typename T>
struct MaxPool2 {
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.h % 2 != 0 || x.w % 2 != 0) throw ValidationError("maxpool2: odd input dims");
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
        arg_.resize(y.numel());
        std::size_t oi = 0;
        for (int ni = 0; ni < x.n; ++ni) {
            for (int ci = 0; ci < x.c; ++ci) {
                const T* p = x.plane(ni, ci);
                for (int r = 0; r < y.h; ++r) {
                    for (int c = 0; c < y.w; ++c, ++oi) {
                        int best = (2 * r) * x.w + 2 * c;
                        for (int dr = 0; dr < 2; ++dr)
                            for (int dc = 0; dc < 2; ++dc) {
                                const int idx = (2 * r + dr) * x.w + 2 * c + dc;
                                if (p[idx] > p[best]) best = idx;
                            }
                        arg_[oi] = best;
                        y.v[oi] = p[best];
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
        std::size_t oi = 0;
        for (int ni = 0; ni < dy.n; ++ni)
            for (int ci = 0; ci < dy.c; ++ci) {
                T* p = dx.plane(ni, ci);
                const std::size_t plane_elems = static_cast<std::size_t>(dy.h) * dy.w;
                for (std::size_t e = 0; e < plane_elems; ++e, ++oi) p[arg_[oi]] += dy.v[oi];
            }
        return dx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
    std::vector<int> arg_;
};

// Nearest-neighbour 2x upsampling.
template <typename T>
struct NearestUp2 {
    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
        for (int ni = 0; ni < x.n; ++ni)
            for (int ci = 0; ci < x.c; ++ci) {
                const T* src = x.plane(ni, ci);
                T* dst = y.plane(ni, ci);
                for (int r = 0; r < y.h; ++r) {
                    const T* srow = src + static_cast<std::size_t>(r / 2) * x.w;
                    T* drow = dst + static_cast<std::size_t>(r) * y.w;
                    for (int c = 0; c < y.w; ++c) drow[c] = srow[c / 2];
                }
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
        for (int ni = 0; ni < dy.n; ++ni)
            for (int ci = 0; ci < dy.c; ++ci) {
                const T* src = dy.plane(ni, ci);
                T* dst = dx.plane(ni, ci);
                for (int r = 0; r < dy.h; ++r) {
                    const T* srow = src + static_cast<std::size_t>(r) * dy.w;
                    T* drow = dst + static_cast<std::size_t>(r / 2) * dx.w;
                    for (int c = 0; c < dy.w; ++c) drow[c / 2] += srow[c];
                }
            }
        return dx;
    }
};

// Batch / instance / identity normalization with learned scale and shift.
// Batch kind keeps running statistics (momentum 0.1) for eval mode;
// instance kind uses per-sample statistics in both modes; kind none is an
// exact identity with no parameters. Variances are biased throughout.
template <typename T>
struct Norm {
    NormKind kind = NormKind::None;
    int channels = 0;
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.1);
    bool train_mode = true;

    Param<T> gamma, beta, run_mean, run_var;

    Norm() = default;
    Norm(std::string name, NormKind kind_, int channels_) : kind(kind_), channels(channels_) {
        if (kind == NormKind::None) return;
        gamma.name = name + ".gamma";
        beta.name = name + ".beta";
        gamma.resize(1, channels, 1, 1);
        beta.resize(1, channels, 1, 1);
        for (auto& v : gamma.w.v) v = T(1);
        if (kind == NormKind::Batch) {
            run_mean.name = name + ".run_mean";
            run_var.name = name + ".run_var";
            run_mean.trainable = false;
            run_var.trainable = false;
            run_mean.resize(1, channels, 1, 1);
            run_var.resize(1, channels, 1, 1);
            for (auto& v : run_var.w.v) v = T(1);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (kind == NormKind::None) return x;
        if (x.c != channels) throw ValidationError("norm: channel mismatch");
        const bool batch_stats =
            kind == NormKind::Instance || (kind == NormKind::Batch && train_mode);
        const int groups = kind == NormKind::Batch ? channels : x.n * channels;
        xhat_ = Tensor<T>::like(x);
        istd_.assign(static_cast<std::size_t>(groups), T(0));
        Tensor<T> y = Tensor<T>::like(x);
        for (int g = 0; g < groups; ++g) {
            const int ci = kind == NormKind::Batch ? g : g % channels;
            T mean, var;
            if (batch_stats) {
                double sum = 0.0, sq = 0.0;
                std::size_t m = 0;
                for_group(x, g, [&](T v) {
                    sum += v;
                    sq += static_cast<double>(v) * v;
                    ++m;
                });
                mean = static_cast<T>(sum / static_cast<double>(m));
                var = static_cast<T>(sq / static_cast<double>(m) -
                                     (sum / static_cast<double>(m)) * (sum / static_cast<double>(m)));
                if (var < T(0)) var = T(0);
                if (kind == NormKind::Batch && train_mode) {
                    auto& rm = run_mean.w.v[static_cast<std::size_t>(ci)];
                    auto& rv = run_var.w.v[static_cast<std::size_t>(ci)];
                    rm = (T(1) - momentum) * rm + momentum * mean;
                    rv = (T(1) - momentum) * rv + momentum * var;
                }
            } else {
                mean = run_mean.w.v[static_cast<std::size_t>(ci)];
                var = run_var.w.v[static_cast<std::size_t>(ci)];
            }
            const T istd = T(1) / std::sqrt(var + eps);
            istd_[static_cast<std::size_t>(g)] = istd;
            const T gw = gamma.w.v[static_cast<std::size_t>(ci)];
            const T bw = beta.w.v[static_cast<std::size_t>(ci)];
            transform_group(x, xhat_, y, g, mean, istd, gw, bw);
        }
        used_batch_stats_ = batch_stats;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (kind == NormKind::None) return dy;
        const int groups = kind == NormKind::Batch ? channels : dy.n * channels;
        Tensor<T> dx = Tensor<T>::like(dy);
        for (int g = 0; g < groups; ++g) {
            const int ci = kind == NormKind::Batch ? g : g % channels;
            const T gw = gamma.w.v[static_cast<std::size_t>(ci)];
            const T istd = istd_[static_cast<std::size_t>(g)];
            double dsum = 0.0, dxsum = 0.0, dgamma = 0.0;
            std::size_t m = 0;
            for_group_idx(dy, g, [&](std::size_t i) {
                dsum += dy.v[i];
                dxsum += static_cast<double>(dy.v[i]) * xhat_.v[i];
                ++m;
            });
            dgamma = dxsum;
            gamma.g.v[static_cast<std::size_t>(ci)] += static_cast<T>(dgamma);
            beta.g.v[static_cast<std::size_t>(ci)] += static_cast<T>(dsum);
            if (used_batch_stats_) {
                const T mean_dy = static_cast<T>(dsum / static_cast<double>(m));
                const T mean_dyx = static_cast<T>(dxsum / static_cast<double>(m));
                for_group_idx(dy, g, [&](std::size_t i) {
                    dx.v[i] = gw * istd * (dy.v[i] - mean_dy - xhat_.v[i] * mean_dyx);
                });
            } else {
                for_group_idx(dy, g, [&](std::size_t i) { dx.v[i] = gw * istd * dy.v[i]; });
            }
        }
        return dx;
    }

    void collect(ParamList<T>& out) {
        if (kind == NormKind::None) return;
        out.push_back(&gamma);
        out.push_back(&beta);
        if (kind == NormKind::Batch) {
            out.push_back(&run_mean);
            out.push_back(&run_var);
        }
    }

private:
    Tensor<T> xhat_;
    std::vector<T> istd_;
    bool used_batch_stats_ = true;

    // Group = channel (batch kind, spanning all samples) or (sample, channel)
    // pair (instance kind).
    template <typename F>
    void for_group(const Tensor<T>& x, int g, F f) const {
        for_group_idx(x, g, [&](std::size_t i) { f(x.v[i]); });
    }

    template <typename F>
    void for_group_idx(const Tensor<T>& x, int g, F f) const {
        const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
        if (kind == NormKind::Batch) {
            for (int ni = 0; ni < x.n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * x.c + g) * plane;
                for (std::size_t e = 0; e < plane; ++e) f(base + e);
            }
        } else {
            const std::size_t base = static_cast<std::size_t>(g) * plane;
            for (std::size_t e = 0; e < plane; ++e) f(base + e);
        }
    }

    void transform_group(const Tensor<T>& x, Tensor<T>& xhat, Tensor<T>& y, int g, T mean, T istd,
                         T gw, T bw) const {
        for_group_idx(x, g, [&](std::size_t i) {
            const T xh = (x.v[i] - mean) * istd;
            xhat.v[i] = xh;
            y.v[i] = gw * xh + bw;
        });
    }
};

// Channel concatenation and its backward split.
template <typename T>
Tensor<T> concat_c(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw ValidationError("concat: shape mismatch");
    Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
    const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
    for (int ni = 0; ni < a.n; ++ni) {
        std::copy_n(a.plane(ni, 0), plane * a.c, y.plane(ni, 0));
        std::copy_n(b.plane(ni, 0), plane * b.c, y.plane(ni, a.c));
    }
    return y;
}

template <typename T>
void split_c(const Tensor<T>& d, int ca, Tensor<T>& da, Tensor<T>& db) {
    da = Tensor<T>(d.n, ca, d.h, d.w);
    db = Tensor<T>(d.n, d.c - ca, d.h, d.w);
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    for (int ni = 0; ni < d.n; ++ni) {
        std::copy_n(d.plane(ni, 0), plane * ca, da.plane(ni, 0));
        std::copy_n(d.plane(ni, ca), plane * (d.c - ca), db.plane(ni, 0));
    }
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ValidationError("add: shape mismatch");
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace forestreg
