#include "mriprep/simd.hpp"

namespace mriprep::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

void gemm_nn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    for (std::size_t i = 0; i < c.rows; ++i) {
        double* crow = c.data + i * c.stride;
        if (!accumulate) {
            for (std::size_t j = 0; j < c.cols; ++j) crow[j] = 0.0;
        }
        const double* arow = a.data + i * a.stride;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data + k * b.stride;
            for (std::size_t j = 0; j < c.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

void gemm_nt(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    for (std::size_t i = 0; i < c.rows; ++i) {
        const double* arow = a.data + i * a.stride;
        double* crow = c.data + i * c.stride;
        for (std::size_t j = 0; j < c.cols; ++j) {
            const double v = dot(arow, b.data + j * b.stride, a.cols);
            crow[j] = accumulate ? crow[j] + v : v;
        }
    }
}

void gemm_tn(MatrixView a, MatrixView b, MutableMatrixView c, bool accumulate) {
    for (std::size_t i = 0; i < c.rows; ++i) {
        double* crow = c.data + i * c.stride;
        if (!accumulate) {
            for (std::size_t j = 0; j < c.cols; ++j) crow[j] = 0.0;
        }
        for (std::size_t k = 0; k < a.rows; ++k) {
            const double aki = a.data[k * a.stride + i];
            const double* brow = b.data + k * b.stride;
            for (std::size_t j = 0; j < c.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

}  // namespace mriprep::simd::scalar
