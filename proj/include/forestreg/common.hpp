#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace forestreg {

// Error categories map onto CLI exit codes (2 usage, 3 validation, 4 runtime).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Number of worker threads used by the compute kernels. 1 = fully serial.
// Parallel sections are written so that results are bit-identical for any
// thread count (each thread owns disjoint output rows).
int thread_count();
void set_thread_count(int n);

// FNV-1a, used to fingerprint configs inside checkpoints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Little-endian raw float I/O for the band raster and checkpoint formats.
void write_f32_le(std::vector<float>& host_order, const std::filesystem::path& path);
std::vector<float> read_f32_le(const std::filesystem::path& path, std::size_t expected_count);

// Writes bytes to path via a temp file + rename in the same directory.
void atomic_write(const std::filesystem::path& path, const void* data, std::size_t size);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace forestreg
