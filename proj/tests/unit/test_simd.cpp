#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/denoise.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"
#include "mriprep/simd.hpp"

using namespace mriprep;
using simd::MatrixView;
using simd::MutableMatrixView;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    phantom::Rng rng(seed, 0x51);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Restores the startup backend when a test switches it.
struct BackendGuard {
    simd::Backend saved = simd::active_backend();
    ~BackendGuard() { simd::set_backend(saved); }
};

// Padded row storage so strided views are exercised.
struct Matrix {
    std::size_t rows, cols, stride;
    std::vector<double> data;
    Matrix(std::size_t r, std::size_t c, std::uint64_t seed) : rows(r), cols(c), stride(c + 3) {
        data = random_vector(r * stride, seed);
    }
    double at(std::size_t i, std::size_t j) const { return data[i * stride + j]; }
    MatrixView view() const { return {data.data(), rows, cols, stride}; }
    MutableMatrixView mut() { return {data.data(), rows, cols, stride}; }
};

enum class Op { nn, nt, tn };

// C[i][j] (+)= sum_k A'(i,k) B'(k,j) by the definition of each variant.
Matrix gemm_oracle(Op op, const Matrix& a, const Matrix& b, const Matrix& c0, bool accumulate) {
    Matrix c = c0;
    const std::size_t k_dim = op == Op::tn ? a.rows : a.cols;
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j) {
            long double s = accumulate ? c0.at(i, j) : 0.0L;
            for (std::size_t k = 0; k < k_dim; ++k) {
                const double av = op == Op::tn ? a.at(k, i) : a.at(i, k);
                const double bv = op == Op::nt ? b.at(j, k) : b.at(k, j);
                s += static_cast<long double>(av) * bv;
            }
            c.data[i * c.stride + j] = static_cast<double>(s);
        }
    return c;
}

using GemmFn = void (*)(MatrixView, MatrixView, MutableMatrixView, bool);

void check_gemm(Op op, GemmFn fn, std::size_t m, std::size_t n, std::size_t k, bool accumulate, std::uint64_t seed) {
    const Matrix a = op == Op::tn ? Matrix(k, m, seed) : Matrix(m, k, seed);
    const Matrix b = op == Op::nt ? Matrix(n, k, seed + 1) : Matrix(k, n, seed + 1);
    Matrix c(m, n, seed + 2);
    const Matrix expect = gemm_oracle(op, a, b, c, accumulate);
    const std::vector<double> before = c.data;
    fn(a.view(), b.view(), c.mut(), accumulate);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            CHECK(c.at(i, j) == doctest::Approx(expect.at(i, j)).epsilon(1e-12).scale(static_cast<double>(k)));
        // Padding between rows is untouched.
        for (std::size_t j = n; j < c.stride && i * c.stride + j < c.data.size(); ++j)
            CHECK(c.data[i * c.stride + j] == before[i * c.stride + j]);
    }
}

struct Kernels {
    const char* name;
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    double (*squared_distance)(const double*, const double*, std::size_t);
    GemmFn nn, nt, tn;
};

std::vector<Kernels> implementations() {
    std::vector<Kernels> out{{"scalar", simd::scalar::dot, simd::scalar::axpy, simd::scalar::squared_distance,
                              simd::scalar::gemm_nn, simd::scalar::gemm_nt, simd::scalar::gemm_tn}};
#ifdef MRIPREP_HAVE_AVX2_TU
    if (simd::backend_available(simd::Backend::avx2))
        out.push_back({"avx2", simd::avx2::dot, simd::avx2::axpy, simd::avx2::squared_distance, simd::avx2::gemm_nn,
                       simd::avx2::gemm_nt, simd::avx2::gemm_tn});
#endif
    return out;
}

}  // namespace

TEST_CASE("vector kernels agree with the definition on every backend") {
    for (const Kernels& kern : implementations()) {
        CAPTURE(kern.name);
        for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 64u, 1001u}) {
            CAPTURE(n);
            const auto a = random_vector(n, n + 1), b = random_vector(n, n + 2);
            long double dot = 0, dist = 0;
            for (std::size_t i = 0; i < n; ++i) {
                dot += static_cast<long double>(a[i]) * b[i];
                dist += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
            }
            const double scale = static_cast<double>(n) + 1.0;
            CHECK(kern.dot(a.data(), b.data(), n) == doctest::Approx(double(dot)).epsilon(1e-13).scale(scale));
            CHECK(kern.squared_distance(a.data(), b.data(), n) ==
                  doctest::Approx(double(dist)).epsilon(1e-13).scale(scale));
            std::vector<double> y = b;
            kern.axpy(0.37, a.data(), y.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.37 * a[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("gemm variants agree with the definition on every backend") {
    const std::vector<std::array<std::size_t, 3>> sizes{{1, 1, 1}, {3, 5, 7}, {4, 4, 4}, {9, 13, 6},
                                                        {16, 8, 33}, {5, 17, 1}, {31, 9, 40}};
    for (const Kernels& kern : implementations()) {
        CAPTURE(kern.name);
        std::uint64_t seed = 0;
        for (const auto& [m, n, k] : sizes)
            for (bool acc : {false, true}) {
                CAPTURE(m);
                CAPTURE(n);
                CAPTURE(k);
                check_gemm(Op::nn, kern.nn, m, n, k, acc, ++seed * 10);
                check_gemm(Op::nt, kern.nt, m, n, k, acc, ++seed * 10);
                check_gemm(Op::tn, kern.tn, m, n, k, acc, ++seed * 10);
            }
    }
}

TEST_CASE("backends agree to rounding on whole operations") {
    if (!simd::backend_available(simd::Backend::avx2)) return;
    BackendGuard guard;

    nnet::Model model_s = nnet::build_model({1, 32, {4, 8}, 4, 0.2}, 3);
    nnet::Model model_v = nnet::build_model({1, 32, {4, 8}, 4, 0.2}, 3);
    phantom::Rng rng(4);
    nnet::Tensor x({3, 1, 32, 32});
    for (double& v : x.data) v = rng.uniform();
    const Image noisy = phantom::add_gaussian_noise(phantom::geometric_phantom(48), 0.08, 5);
    denoise::Bm3dProfile p;
    p.sigma = 0.08;

    simd::set_backend(simd::Backend::scalar);
    const nnet::Tensor ys = model_s.forward(x, nnet::Mode::train);
    const Image ds = denoise::bm3d(noisy, p);
    simd::set_backend(simd::Backend::avx2);
    const nnet::Tensor yv = model_v.forward(x, nnet::Mode::train);
    const Image dv = denoise::bm3d(noisy, p);

    for (std::size_t i = 0; i < ys.size(); ++i) CHECK(yv.data[i] == doctest::Approx(ys.data[i]).epsilon(1e-9));
    CHECK(testing::max_abs_diff(ds, dv) < 1e-6);
    // Each backend on its own is reproducible.
    CHECK(denoise::bm3d(noisy, p) == dv);
}

TEST_CASE("backend selection") {
    BackendGuard guard;
    CHECK(simd::backend_available(simd::Backend::scalar));
    simd::set_backend(simd::Backend::scalar);
    CHECK(simd::active_backend() == simd::Backend::scalar);
    CHECK(simd::backend_name(simd::Backend::scalar) == "scalar");
    CHECK(simd::backend_name(simd::Backend::avx2) == "avx2");
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK(simd::dot(a, b) == 32.0);
    CHECK(simd::squared_distance(a, b) == 27.0);
    CHECK_THROWS_AS(simd::dot(a, std::vector<double>{1.0}), ArgumentError);
}
