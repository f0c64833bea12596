// Compiled with -mavx2 -mfma; only reached after a CPUID check.

#include "mriprep/simd.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace mriprep::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    const __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// Packed GEMM: C (m x n) = op(A) (m x k) * op(B) (k x n), with operands read
// through strided accessors so the three public layouts share one driver.
// A is packed into 4-row micro-panels and B into 12-column micro-panels,
// both k-major and zero-padded, so the micro-kernel streams contiguous memory.
constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 12;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 3072;

// Element (i, k) lives at data[i * row_step + k * col_step].
struct Operand {
    const double* data;
    std::size_t row_step;
    std::size_t col_step;

    double at(std::size_t i, std::size_t k) const { return data[i * row_step + k * col_step]; }
};

void pack_a(const Operand& a, std::size_t i0, std::size_t mc, std::size_t k0, std::size_t kc, double* out) {
    for (std::size_t ir = 0; ir < mc; ir += kMr) {
        const std::size_t rows = std::min(kMr, mc - ir);
        for (std::size_t k = 0; k < kc; ++k) {
            for (std::size_t r = 0; r < rows; ++r) out[r] = a.at(i0 + ir + r, k0 + k);
            for (std::size_t r = rows; r < kMr; ++r) out[r] = 0.0;
            out += kMr;
        }
    }
}

// b.at(k, j) is element (k, j) of op(B).
void pack_b(const Operand& b, std::size_t k0, std::size_t kc, std::size_t j0, std::size_t nc, double* out) {
    for (std::size_t jr = 0; jr < nc; jr += kNr) {
        const std::size_t cols = std::min(kNr, nc - jr);
        if (cols == kNr && b.col_step == 1) {
            for (std::size_t k = 0; k < kc; ++k) {
                const double* src = b.data + (k0 + k) * b.row_step + j0 + jr;
                _mm256_store_pd(out, _mm256_loadu_pd(src));
                _mm256_store_pd(out + 4, _mm256_loadu_pd(src + 4));
                _mm256_store_pd(out + 8, _mm256_loadu_pd(src + 8));
                out += kNr;
            }
            continue;
        }
        for (std::size_t k = 0; k < kc; ++k) {
            for (std::size_t c = 0; c < cols; ++c) out[c] = b.at(k0 + k, j0 + jr + c);
            for (std::size_t c = cols; c < kNr; ++c) out[c] = 0.0;
            out += kNr;
        }
    }
}

// 4 x 12 block: acc = sum over kc of pa[k] (x) pb[k]; then C = acc or C += acc.
void micro_kernel(const double* pa, const double* pb, std::size_t kc, double* c, std::size_t ldc, bool add,
                  std::size_t rows, std::size_t cols) {
    __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd(), c02 = _mm256_setzero_pd();
    __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd(), c12 = _mm256_setzero_pd();
    __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd(), c22 = _mm256_setzero_pd();
    __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd(), c32 = _mm256_setzero_pd();
    for (std::size_t k = 0; k < kc; ++k) {
        const __m256d b0 = _mm256_load_pd(pb), b1 = _mm256_load_pd(pb + 4), b2 = _mm256_load_pd(pb + 8);
        __m256d a = _mm256_broadcast_sd(pa);
        c00 = _mm256_fmadd_pd(a, b0, c00);
        c01 = _mm256_fmadd_pd(a, b1, c01);
        c02 = _mm256_fmadd_pd(a, b2, c02);
        a = _mm256_broadcast_sd(pa + 1);
        c10 = _mm256_fmadd_pd(a, b0, c10);
        c11 = _mm256_fmadd_pd(a, b1, c11);
        c12 = _mm256_fmadd_pd(a, b2, c12);
        a = _mm256_broadcast_sd(pa + 2);
        c20 = _mm256_fmadd_pd(a, b0, c20);
        c21 = _mm256_fmadd_pd(a, b1, c21);
        c22 = _mm256_fmadd_pd(a, b2, c22);
        a = _mm256_broadcast_sd(pa + 3);
        c30 = _mm256_fmadd_pd(a, b0, c30);
        c31 = _mm256_fmadd_pd(a, b1, c31);
        c32 = _mm256_fmadd_pd(a, b2, c32);
        pa += kMr;
        pb += kNr;
    }
    const __m256d acc[kMr][3] = {{c00, c01, c02}, {c10, c11, c12}, {c20, c21, c22}, {c30, c31, c32}};
    if (rows == kMr && cols == kNr) {
        for (std::size_t r = 0; r < kMr; ++r) {
            double* row = c + r * ldc;
            for (int v = 0; v < 3; ++v) {
                const __m256d out = add ? _mm256_add_pd(_mm256_loadu_pd(row + 4 * v), acc[r][v]) : acc[r][v];
                _mm256_storeu_pd(row + 4 * v, out);
            }
        }
        return;
    }
    alignas(32) double tile[kMr][kNr];
    for (std::size_t r = 0; r < kMr; ++r)
        for (int v = 0; v < 3; ++v) _mm256_store_pd(&tile[r][4 * v], acc[r][v]);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t q = 0; q < cols; ++q) c[r * ldc + q] = add ? c[r * ldc + q] + tile[r][q] : tile[r][q];
}

struct PackBuffers {
    double* a;
    double* b;
};

double* align64(std::vector<double>& v) {
    auto p = reinterpret_cast<std::uintptr_t>(v.data());
    return reinterpret_cast<double*>((p + 63) & ~std::uintptr_t{63});
}

// Thread-local scratch sized for the largest blocks.
PackBuffers buffers() {
    thread_local std::vector<double> a_buf(kMc * kKc + 8);
    thread_local std::vector<double> b_buf(kKc * (kNc + kNr) + 8);
    return {align64(a_buf), align64(b_buf)};
}

void gemm_packed(const Operand& a, const Operand& b, std::size_t m, std::size_t n, std::size_t depth,
                 MutableMatrixView c, bool accumulate) {
    if (depth == 0) {
        if (!accumulate)
            for (std::size_t i = 0; i < m; ++i) std::fill_n(c.data + i * c.stride, n, 0.0);
        return;
    }
    const PackBuffers buf = buffers();
    for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
        const std::size_t nc = std::min(kNc, n - j0);
        for (std::size_t k0 = 0; k0 < depth; k0 += kKc) {
            const std::size_t kc = std::min(kKc, depth - k0);
            const bool add = accumulate || k0 > 0;
            pack_b(b, k0, kc, j0, nc, buf.b);
            for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
                const std::size_t mc = std::min(kMc, m - i0);
                pack_a(a, i0, mc, k0, kc, buf.a);
                for (std::size_t jr = 0; jr < nc; jr += kNr) {
                    const double* pb = buf.b + jr * kc;
                    for (std::size_t ir = 0; ir < mc; ir += kMr) {
                        double* cp = c.data + (i0 + ir) * c.stride + j0 + jr;
                        micro_kernel(buf.a + ir * kc, pb, kc, cp, c.stride, add, std::min(kMr, mc - ir),
                                     std::min(kNr, nc - jr));
                    }
                }
            }
        }
    }
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
        s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
        s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
    }
    for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    double sum = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(const double* a, const double* b, std::size_t n) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
        s1 = _mm256_fmadd_pd(d1, d1, s1);
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        s0 = _mm256_fmadd_pd(d0, d0, s0);
    }
    double sum = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    gemm_packed({a.data, a.stride, 1}, {b.data, b.stride, 1}, c.rows, c.cols, a.cols, c, accumulate);
}

void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    gemm_packed({a.data, a.stride, 1}, {b.data, 1, b.stride}, c.rows, c.cols, a.cols, c, accumulate);
}

void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    gemm_packed({a.data, 1, a.stride}, {b.data, b.stride, 1}, c.rows, c.cols, a.rows, c, accumulate);
}

}  // namespace mriprep::simd::avx2
