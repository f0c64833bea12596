#include "mriprep/biasfield.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "mriprep/denoise.hpp"
#include "mriprep/errors.hpp"

namespace mriprep::bias {

void N4Params::validate() const {
    if (max_iterations < 1) throw ArgumentError("n4: max_iterations must be >= 1");
    if (!(convergence_threshold > 0.0)) throw ArgumentError("n4: convergence_threshold must be > 0");
    if (histogram_bins < 32) throw ArgumentError("n4: histogram_bins must be >= 32");
    if (!(fwhm > 0.0)) throw ArgumentError("n4: fwhm must be > 0");
    if (!(wiener_noise > 0.0)) throw ArgumentError("n4: wiener_noise must be > 0");
    if (!(field_smoothing_sigma > 0.0)) throw ArgumentError("n4: field_smoothing_sigma must be > 0");
}

double RealHistogram::mass() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0.0); }

namespace {

using cplx = std::complex<double>;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cplx wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (cplx& x : a) x /= static_cast<double>(n);
}

double gaussian_from_fwhm(double offset, double fwhm) {
    const double exp_factor = 4.0 * std::numbers::ln2 / (fwhm * fwhm);
    return std::exp(-offset * offset * exp_factor);
}

// Pixels of `values` at mask positions.
struct MaskedSamples {
    std::vector<std::size_t> index;
    std::vector<double> value;
};

RealHistogram parzen_histogram(const std::vector<double>& values, int bins) {
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    RealHistogram h;
    h.lower = *lo_it;
    h.bin_width = (*hi_it - *lo_it) / static_cast<double>(bins - 1);
    h.counts.assign(static_cast<std::size_t>(bins), 0.0);
    for (double v : values) {
        const double c = (v - h.lower) / h.bin_width;
        const auto idx = std::min(static_cast<std::size_t>(std::floor(c)), static_cast<std::size_t>(bins - 1));
        const double frac = c - static_cast<double>(idx);
        if (idx + 1 < static_cast<std::size_t>(bins)) {
            h.counts[idx] += 1.0 - frac;
            h.counts[idx + 1] += frac;
        } else {
            h.counts[idx] += 1.0;
        }
    }
    return h;
}

// E[u | v] at each bin centre v, with u distributed as `sharpened` and v = u
// blurred by the Gaussian of the given FWHM.
std::vector<double> conditional_expectation(const RealHistogram& sharpened, double fwhm) {
    const std::size_t n = sharpened.counts.size();
    const double scaled = fwhm / sharpened.bin_width;
    std::vector<double> kernel(n);
    for (std::size_t d = 0; d < n; ++d) kernel[d] = gaussian_from_fwhm(static_cast<double>(d), scaled);
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = sharpened.counts[i] * kernel[i > j ? i - j : j - i];
            num += w * sharpened.center(i);
            den += w;
        }
        out[j] = den > 0.0 ? num / den : sharpened.center(j);
    }
    return out;
}

double interpolate_bins(const std::vector<double>& table, const RealHistogram& h, double v) {
    const double c = (v - h.lower) / h.bin_width;
    if (c <= 0.0) return table.front();
    const double last = static_cast<double>(table.size() - 1);
    if (c >= last) return table.back();
    const auto i = static_cast<std::size_t>(c);
    const double f = c - static_cast<double>(i);
    return (1.0 - f) * table[i] + f * table[i + 1];
}

// Gaussian smoothing restricted to the mask (normalized convolution).
Image smooth_in_mask(const Image& values, const Image& weights, const Mask& mask, double sigma) {
    const Image num = denoise::gaussian_filter(values, sigma);
    const Image den = denoise::gaussian_filter(weights, sigma);
    Image out(values.width(), values.height());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask[i] && den.pixels()[i] > 1e-12) out.pixels()[i] = num.pixels()[i] / den.pixels()[i];
    }
    return out;
}

}  // namespace

RealHistogram sharpen_histogram(const RealHistogram& hist, double fwhm, double wiener_noise) {
    const double input_mass = hist.mass();
    if (!(input_mass > 0.0)) throw ArgumentError("sharpen_histogram: histogram has zero mass");
    if (!(fwhm > 0.0) || !(hist.bin_width > 0.0)) throw ArgumentError("sharpen_histogram: fwhm and bin width must be > 0");
    if (!(wiener_noise > 0.0)) throw ArgumentError("sharpen_histogram: wiener noise must be > 0");

    const std::size_t n = hist.counts.size();
    std::size_t padded = 1;
    while (padded < 2 * n) padded <<= 1;
    const std::size_t offset = (padded - n) / 2;

    std::vector<cplx> v(padded, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i + offset] = hist.counts[i];
    fft(v, false);

    // Unit-mass Gaussian centred on index 0 (circularly symmetric).
    const double scaled = fwhm / hist.bin_width;
    std::vector<cplx> f(padded, 0.0);
    double f_mass = 0.0;
    for (std::size_t k = 0; k < padded; ++k) {
        const double d = static_cast<double>(std::min(k, padded - k));
        const double g = gaussian_from_fwhm(d, scaled);
        f[k] = g;
        f_mass += g;
    }
    for (cplx& x : f) x /= f_mass;
    fft(f, false);

    for (std::size_t k = 0; k < padded; ++k) {
        const cplx g = std::conj(f[k]) / (std::norm(f[k]) + wiener_noise);
        v[k] *= g;
    }
    fft(v, true);

    RealHistogram out{hist.lower, hist.bin_width, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) out.counts[i] = std::max(0.0, v[i + offset].real());
    const double mass = out.mass();
    if (mass > 0.0) {
        for (double& c : out.counts) c *= input_mass / mass;
    } else {
        out.counts = hist.counts;
    }
    return out;
}

BiasField estimate_bias_n4(const Image& image, const Mask& mask, const N4Params& params, N4Trace* trace) {
    params.validate();
    if (!mask.matches(image)) throw ArgumentError("n4: mask does not match image dimensions");
    if (!mask.any()) throw ArgumentError("n4: mask is empty");

    MaskedSamples samples;
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (!mask[i]) continue;
        const double v = image.pixels()[i];
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("n4: non-positive intensity inside the mask");
        samples.index.push_back(i);
        samples.value.push_back(std::log(std::max(v, kLogFloor)));
    }

    Image field(image.width(), image.height(), 0.0);
    Image mask_weights(image.width(), image.height(), 0.0);
    for (std::size_t i : samples.index) mask_weights.pixels()[i] = 1.0;

    if (trace) *trace = {};
    std::vector<double> corrected(samples.value.size());
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        for (std::size_t s = 0; s < corrected.size(); ++s)
            corrected[s] = samples.value[s] - field.pixels()[samples.index[s]];
        const auto [lo, hi] = std::minmax_element(corrected.begin(), corrected.end());
        if (*hi - *lo < 1e-12) {
            // Flat within the mask: nothing left to explain.
            if (trace) {
                trace->convergence.push_back(0.0);
                trace->converged = true;
            }
            break;
        }
        const RealHistogram hist = parzen_histogram(corrected, params.histogram_bins);
        const RealHistogram sharp = sharpen_histogram(hist, params.fwhm, params.wiener_noise);
        const std::vector<double> expectation = conditional_expectation(sharp, params.fwhm);

        Image residual(image.width(), image.height(), 0.0);
        for (std::size_t s = 0; s < corrected.size(); ++s)
            residual.pixels()[samples.index[s]] = corrected[s] - interpolate_bins(expectation, hist, corrected[s]);
        const Image update = smooth_in_mask(residual, mask_weights, mask, params.field_smoothing_sigma);

        // Coefficient of variation of exp(new - old) over the mask.
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i : samples.index) {
            const double r = std::exp(update.pixels()[i]);
            sum += r;
            sum2 += r * r;
            field.pixels()[i] += update.pixels()[i];
        }
        const double count = static_cast<double>(samples.index.size());
        const double mu = sum / count;
        const double cov = std::sqrt(std::max(0.0, sum2 / count - mu * mu)) / mu;
        if (trace) trace->convergence.push_back(cov);
        if (cov < params.convergence_threshold) {
            if (trace) trace->converged = true;
            break;
        }
    }
    return BiasField{std::move(field)};
}

Image remove_field(const Image& image, const BiasField& field) {
    if (!image.same_shape(field.log_field)) throw ArgumentError("correct_bias: field does not match image");
    Image out(image.width(), image.height());
    for (std::size_t i = 0; i < image.size(); ++i)
        out.pixels()[i] = image.pixels()[i] * std::exp(-field.log_field.pixels()[i]);
    return out;
}

Image correct_bias(const Image& image, const BiasField& field) {
    Image out = remove_field(image, field);
    double peak = 0.0;
    for (double& v : out.pixels()) {
        v = std::clamp(v, 0.0, 1.5);
        peak = std::max(peak, v);
    }
    if (peak > 0.0)
        for (double& v : out.pixels()) v /= peak;
    return out;
}

}  // namespace mriprep::bias
