#include <atomic>
#include <cstdlib>
#include <string>

#include "mriprep/errors.hpp"
#include "mriprep/simd.hpp"

namespace mriprep::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(MRIPREP_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend initial_backend() noexcept {
    const bool avx2 = cpu_has_avx2();
    if (const char* env = std::getenv("MRIPREP_SIMD")) {
        const std::string choice(env);
        if (choice == "scalar") return Backend::scalar;
        if (choice == "avx2" && avx2) return Backend::avx2;
    }
    return avx2 ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() noexcept {
    static std::atomic<Backend> backend{initial_backend()};
    return backend;
}

void check_same_size(std::size_t a, std::size_t b) {
    if (a != b) throw ArgumentError("simd: operand length mismatch");
}

void check_gemm(std::size_t m, std::size_t n, std::size_t k_a, std::size_t k_b, MutableMatrixView c) {
    if (c.rows != m || c.cols != n || k_a != k_b)
        throw ArgumentError("simd: gemm operand shapes are incompatible");
}

}  // namespace

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

bool backend_available(Backend backend) noexcept {
    return backend == Backend::scalar || cpu_has_avx2();
}

void set_backend(Backend backend) {
    if (!backend_available(backend)) throw ArgumentError("simd: backend not available on this CPU");
    current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "unknown";
}

#ifdef MRIPREP_HAVE_AVX2_TU
#define MRIPREP_DISPATCH(call)                                         \
    (active_backend() == Backend::avx2 ? avx2::call : scalar::call)
#else
#define MRIPREP_DISPATCH(call) scalar::call
#endif

double dot(std::span<const double> a, std::span<const double> b) {
    check_same_size(a.size(), b.size());
    return MRIPREP_DISPATCH(dot(a.data(), b.data(), a.size()));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    check_same_size(x.size(), y.size());
    MRIPREP_DISPATCH(axpy(alpha, x.data(), y.data(), x.size()));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    check_same_size(a.size(), b.size());
    return MRIPREP_DISPATCH(squared_distance(a.data(), b.data(), a.size()));
}

void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    check_gemm(a.rows, b.cols, a.cols, b.rows, c);
    MRIPREP_DISPATCH(gemm_nn(a, b, c, accumulate));
}

void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    check_gemm(a.rows, b.rows, a.cols, b.cols, c);
    MRIPREP_DISPATCH(gemm_nt(a, b, c, accumulate));
}

void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    check_gemm(a.cols, b.cols, a.rows, b.rows, c);
    MRIPREP_DISPATCH(gemm_tn(a, b, c, accumulate));
}

#undef MRIPREP_DISPATCH

}  // namespace mriprep::simd
