#include "mriprep/denoise.hpp"

#include <algorithm>
#include <cmath>

#include "mriprep/errors.hpp"

namespace mriprep::denoise {

std::vector<double> gaussian_kernel_1d(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("gaussian sigma must be finite and >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * k * k / (sigma * sigma));
        kernel[k + radius] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;
    return kernel;
}

Image gaussian_filter(const Image& image, double sigma) {
    std::vector<double> taps = gaussian_kernel_1d(sigma);
    if (taps.size() == 1) return image;
    const int n = static_cast<int>(taps.size());
    const Kernel2d horizontal{n, 1, taps};
    const Kernel2d vertical{1, n, std::move(taps)};
    return convolve2d(convolve2d(image, horizontal, Border::reflect), vertical, Border::reflect);
}

// ---------------------------------------------------------------------------
// Total variation

void TvParams::validate() const {
    if (!(weight > 0.0)) throw ArgumentError("tv weight must be > 0");
    if (max_iters < 1) throw ArgumentError("tv max_iters must be >= 1");
    if (!(tol >= 0.0)) throw ArgumentError("tv tol must be >= 0");
}

namespace {

// Forward differences, zero across the last column / row.
void gradient(const std::vector<double>& u, int w, int h, std::vector<double>& gx, std::vector<double>& gy) {
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            gx[i] = x + 1 < w ? u[i + 1] - u[i] : 0.0;
            gy[i] = y + 1 < h ? u[i + w] - u[i] : 0.0;
        }
    }
}

// Negative adjoint of `gradient`.
void divergence(const std::vector<double>& px, const std::vector<double>& py, int w, int h,
                std::vector<double>& div) {
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double dx = 0.0, dy = 0.0;
            if (w > 1) {
                if (x == 0) dx = px[i];
                else if (x == w - 1) dx = -px[i - 1];
                else dx = px[i] - px[i - 1];
            }
            if (h > 1) {
                if (y == 0) dy = py[i];
                else if (y == h - 1) dy = -py[i - w];
                else dy = py[i] - py[i - w];
            }
            div[i] = dx + dy;
        }
    }
}

}  // namespace

Image tv_denoise(const Image& observed, const TvParams& params) {
    params.validate();
    if (observed.empty()) throw ArgumentError("tv_denoise: empty image");
    constexpr double tau = 0.25;
    const int w = observed.width(), h = observed.height();
    const std::size_t n = observed.size();
    const double inv_lambda = 1.0 / params.weight;
    const std::span<const double> f = observed.pixels();

    std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), g(n), gx(n), gy(n);
    for (int iter = 0; iter < params.max_iters; ++iter) {
        divergence(px, py, w, h, div);
        for (std::size_t i = 0; i < n; ++i) g[i] = div[i] - f[i] * inv_lambda;
        gradient(g, w, h, gx, gy);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double norm = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
            const double denom = 1.0 + tau * norm;
            const double nx = (px[i] + tau * gx[i]) / denom;
            const double ny = (py[i] + tau * gy[i]) / denom;
            change = std::max({change, std::abs(nx - px[i]), std::abs(ny - py[i])});
            px[i] = nx;
            py[i] = ny;
        }
        if (change < params.tol) break;
    }
    divergence(px, py, w, h, div);
    Image out(w, h);
    std::span<double> u = out.pixels();
    for (std::size_t i = 0; i < n; ++i) u[i] = f[i] - params.weight * div[i];
    return out;
}

double tv_energy(const Image& candidate, const Image& observed, double weight) {
    if (!candidate.same_shape(observed)) throw ArgumentError("tv_energy: dimension mismatch");
    const int w = candidate.width(), h = candidate.height();
    double fidelity = 0.0, tv = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = candidate.at(x, y) - observed.at(x, y);
            fidelity += d * d;
            const double dx = x + 1 < w ? candidate.at(x + 1, y) - candidate.at(x, y) : 0.0;
            const double dy = y + 1 < h ? candidate.at(x, y + 1) - candidate.at(x, y) : 0.0;
            tv += std::sqrt(dx * dx + dy * dy);
        }
    }
    return 0.5 * fidelity + weight * tv;
}

}  // namespace mriprep::denoise
