#pragma once

// Data-parallel inner loops shared by the image and network code.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA implementation compiled in its own translation unit. The active
// backend is chosen once at startup from CPUID and can be overridden with
// MRIPREP_SIMD=scalar|avx2 or set_backend(). Results of the two backends agree
// to rounding (FMA contraction differs), not bitwise; each backend on its own
// is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace mriprep::simd {

enum class Backend { scalar, avx2 };

Backend active_backend() noexcept;
bool backend_available(Backend backend) noexcept;
// Throws ArgumentError if the backend is not available on this CPU.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend) noexcept;

// Sum of a[i] * b[i].
double dot(std::span<const double> a, std::span<const double> b);

// y[i] += alpha * x[i]
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Sum of (a[i] - b[i])^2.
double squared_distance(std::span<const double> a, std::span<const double> b);

// Row-major matrix view used by the GEMM entry points.
struct MatrixView {
    const double* data;
    std::size_t rows;
    std::size_t cols;
    std::size_t stride;  // elements between consecutive rows
};

struct MutableMatrixView {
    double* data;
    std::size_t rows;
    std::size_t cols;
    std::size_t stride;
};

// C = A * B (accumulate=false) or C += A * B (accumulate=true).
// A is M x K, B is K x N, C is M x N.
void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);

// C = A * B^T or C += A * B^T. A is M x K, B is N x K, C is M x N.
void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);

// C = A^T * B or C += A^T * B. A is K x M, B is K x N, C is M x N.
void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);

// Explicit-backend entry points, used by the equivalence tests and by the
// dispatching functions above.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define MRIPREP_HAVE_AVX2_TU 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate);
}  // namespace avx2
#endif

}  // namespace mriprep::simd
