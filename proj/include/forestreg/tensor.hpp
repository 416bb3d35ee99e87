#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "forestreg/common.hpp"

namespace forestreg {

// Dense NCHW tensor. T is float in the training path and double in test
// mode, where finite-difference gradient checks need the extra precision.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    static Tensor like(const Tensor& o, T fill = T(0)) { return Tensor(o.n, o.c, o.h, o.w, fill); }

    std::size_t numel() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    T& at(int ni, int ci, int hi, int wi) {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + hi) * w + wi];
    }
    T at(int ni, int ci, int hi, int wi) const {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + hi) * w + wi];
    }

    T* plane(int ni, int ci) { return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w; }
    const T* plane(int ni, int ci) const {
        return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
    }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> o(n, c, h, w);
        for (std::size_t i = 0; i < v.size(); ++i) o.v[i] = static_cast<U>(v[i]);
        return o;
    }
};

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    assert(a.same_shape(b));
    Tensor<T> o = Tensor<T>::like(a);
    for (std::size_t i = 0; i < a.numel(); ++i) o.v[i] = a.v[i] * b.v[i];
    return o;
}

// C[M x N] += A[M x K] * B[K x N], all row-major. The j-inner loop
// vectorizes; accumulation order per output element is fixed, so results do
// not depend on the thread count (rows of C are distributed across threads).
template <typename T>
void gemm_accum(const T* a, const T* b, T* c, int m, int k, int n);

// C[M x N] += A[M x K] * B[N x K]^T  (B stored row-major N x K).
template <typename T>
void gemm_accum_nt(const T* a, const T* b, T* c, int m, int k, int n);

// C[M x N] += A[K x M]^T * B[K x N]  (A stored row-major K x M).
template <typename T>
void gemm_accum_tn(const T* a, const T* b, T* c, int m, int k, int n);

void parallel_for(int begin, int end, const std::function<void(int, int)>& body);

}  // namespace forestreg
