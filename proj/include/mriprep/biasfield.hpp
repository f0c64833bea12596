#pragma once

#include <vector>

#include "mriprep/image.hpp"

namespace mriprep::bias {

struct N4Params {
    int max_iterations = 50;
    double convergence_threshold = 0.001;  // CoV of the per-iteration field ratio
    int histogram_bins = 200;
    double fwhm = 0.15;                    // deconvolution kernel width, log-intensity units
    double wiener_noise = 0.01;
    double field_smoothing_sigma = 30.0;   // pixels

    void validate() const;
};

// Real-valued histogram over uniformly spaced bin centres lower + i * bin_width.
struct RealHistogram {
    double lower = 0.0;
    double bin_width = 1.0;
    std::vector<double> counts;

    double mass() const noexcept;
    double center(std::size_t i) const noexcept { return lower + static_cast<double>(i) * bin_width; }
};

// Multiplicative field stored as its logarithm; zero where nothing was
// estimated, so correction is the identity there.
struct BiasField {
    Image log_field;
};

struct N4Trace {
    std::vector<double> convergence;  // one entry per iteration
    bool converged = false;
};

// Floor applied to intensities before taking logs.
inline constexpr double kLogFloor = 1e-4;

// Wiener deconvolution of `hist` by a Gaussian of the given FWHM (same units
// as the bin centres). Negative bins are clamped to zero and the result is
// rescaled to the input mass. Throws ArgumentError for a zero-mass histogram.
RealHistogram sharpen_histogram(const RealHistogram& hist, double fwhm, double wiener_noise);

// Iterative log-domain estimate: sharpen the masked histogram, map each pixel
// to its conditional expectation under the sharpened distribution, smooth the
// residual and accumulate it into the field.
BiasField estimate_bias_n4(const Image& image, const Mask& mask, const N4Params& params = {},
                           N4Trace* trace = nullptr);

// image * exp(-log_field), no clamping or normalization.
Image remove_field(const Image& image, const BiasField& field);

// remove_field, clamped to [0, 1.5], then divided by its maximum.
Image correct_bias(const Image& image, const BiasField& field);

}  // namespace mriprep::bias
