#include "forestreg/common.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "forestreg/tensor.hpp"

namespace forestreg {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(); }

void set_thread_count(int n) {
    if (n < 1) n = 1;
    g_threads.store(n);
}

void parallel_for(int begin, int end, const std::function<void(int, int)>& body) {
    const int nt = thread_count();
    const int span = end - begin;
    if (span <= 0) return;
    if (nt <= 1 || span < 2 * nt) {
        body(begin, end);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nt));
    const int chunk = (span + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const int lo = begin + t * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back(body, lo, hi);
    }
    for (auto& w : workers) w.join();
}

namespace {

template <typename T>
void gemm_accum_impl(const T* a, const T* b, T* c, int m, int k, int n) {
    parallel_for(0, m, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            T* crow = c + static_cast<std::size_t>(i) * n;
            const T* arow = a + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// C[i][j] += sum_p a[i][p] * b[j][p]: per-row dot products, rows disjoint
// across threads, accumulation order fixed.
template <typename T>
void gemm_accum_nt_impl(const T* a, const T* b, T* c, int m, int k, int n) {
    parallel_for(0, m, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            T* crow = c + static_cast<std::size_t>(i) * n;
            const T* arow = a + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < n; ++j) {
                const T* brow = b + static_cast<std::size_t>(j) * k;
                T acc = T(0);
                for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] += acc;
            }
        }
    });
}

// C[i][j] += sum_t a[t][i] * b[t][j]: SAXPY over t per output row.
template <typename T>
void gemm_accum_tn_impl(const T* a, const T* b, T* c, int m, int k, int n) {
    parallel_for(0, m, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int t = 0; t < k; ++t) {
                const T av = a[static_cast<std::size_t>(t) * m + i];
                if (av == T(0)) continue;
                const T* brow = b + static_cast<std::size_t>(t) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

}  // namespace

template <>
void gemm_accum<float>(const float* a, const float* b, float* c, int m, int k, int n) {
    gemm_accum_impl(a, b, c, m, k, n);
}
template <>
void gemm_accum<double>(const double* a, const double* b, double* c, int m, int k, int n) {
    gemm_accum_impl(a, b, c, m, k, n);
}
template <>
void gemm_accum_nt<float>(const float* a, const float* b, float* c, int m, int k, int n) {
    gemm_accum_nt_impl(a, b, c, m, k, n);
}
template <>
void gemm_accum_nt<double>(const double* a, const double* b, double* c, int m, int k, int n) {
    gemm_accum_nt_impl(a, b, c, m, k, n);
}
template <>
void gemm_accum_tn<float>(const float* a, const float* b, float* c, int m, int k, int n) {
    gemm_accum_tn_impl(a, b, c, m, k, n);
}
template <>
void gemm_accum_tn<double>(const double* a, const double* b, double* c, int m, int k, int n) {
    gemm_accum_tn_impl(a, b, c, m, k, n);
}

namespace {

void to_le_bytes(const float* src, std::size_t count, std::vector<unsigned char>& out) {
    out.resize(count * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), src, count * 4);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, src + i, 4);
            out[i * 4 + 0] = static_cast<unsigned char>(bits);
            out[i * 4 + 1] = static_cast<unsigned char>(bits >> 8);
            out[i * 4 + 2] = static_cast<unsigned char>(bits >> 16);
            out[i * 4 + 3] = static_cast<unsigned char>(bits >> 24);
        }
    }
}

void from_le_bytes(const unsigned char* src, std::size_t count, float* out) {
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out, src, count * 4);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits = std::uint32_t(src[i * 4]) | (std::uint32_t(src[i * 4 + 1]) << 8) |
                                 (std::uint32_t(src[i * 4 + 2]) << 16) |
                                 (std::uint32_t(src[i * 4 + 3]) << 24);
            std::memcpy(out + i, &bits, 4);
        }
    }
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const void* data, std::size_t size) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw RuntimeError("cannot open for writing: " + tmp.string());
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!f) throw RuntimeError("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_f32_le(std::vector<float>& host_order, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes;
    to_le_bytes(host_order.data(), host_order.size(), bytes);
    atomic_write(path, bytes.data(), bytes.size());
}

std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw RuntimeError("cannot open: " + path.string());
    const auto size = static_cast<std::size_t>(f.tellg());
    if (size != expected_count * 4) {
        throw ValidationError("byte count mismatch in " + path.string() + ": got " +
                              std::to_string(size) + ", expected " +
                              std::to_string(expected_count * 4));
    }
    std::vector<unsigned char> bytes(size);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    std::vector<float> out(expected_count);
    from_le_bytes(bytes.data(), expected_count, out.data());
    return out;
}

}  // namespace forestreg
