#pragma once

#include <vector>

#include "mriprep/image.hpp"

namespace mriprep::denoise {

// Normalized 1-D Gaussian of radius ceil(3 sigma). sigma == 0 gives [1].
std::vector<double> gaussian_kernel_1d(double sigma);

// Separable Gaussian smoothing with reflect border; sigma == 0 is the identity.
Image gaussian_filter(const Image& image, double sigma);

// ---------------------------------------------------------------------------
// Total variation

struct TvParams {
    double weight = 0.1;  // regularization lambda
    int max_iters = 200;
    double tol = 1e-4;    // max change of the dual field between iterations

    void validate() const;
};

// Chambolle's dual projection for min_u 1/2 |u - f|^2 + weight * TV(u),
// isotropic TV, step 0.25.
Image tv_denoise(const Image& observed, const TvParams& params = {});

// 1/2 |candidate - observed|^2 + weight * sum sqrt(dx^2 + dy^2), forward
// differences (zero across the last row / column).
double tv_energy(const Image& candidate, const Image& observed, double weight);

// ---------------------------------------------------------------------------
// BM3D

struct Bm3dProfile {
    int block_size = 8;       // 4, 8 or 16
    int search_window = 39;   // odd, > block_size
    int max_group_size = 16;  // power of two
    int step = 3;             // stride between reference blocks
    // Per-pixel mean squared block difference, in 8-bit intensity units
    // (the [0,1] distance is scaled by 255^2 before comparison).
    double match_threshold_stage1 = 2500.0;
    double match_threshold_stage2 = 400.0;
    double hard_threshold_multiplier = 2.7;  // threshold = multiplier * sigma
    double sigma = 0.0;                      // noise std in [0,1] intensity units

    void validate() const;
};

struct BlockPosition {
    int x = 0;  // top-left corner
    int y = 0;
    friend bool operator==(const BlockPosition&, const BlockPosition&) = default;
};

struct BlockMatch {
    BlockPosition position;
    double distance = 0.0;  // per-pixel squared difference, 8-bit units
};

// Blocks within the search window centred on `reference` whose distance is at
// most `threshold`, ascending by distance (ties by row then column), capped
// at profile.max_group_size. The reference block is always first.
std::vector<BlockMatch> block_match(const Image& image, BlockPosition reference, const Bm3dProfile& profile,
                                    double threshold);

// Same, using the stage-1 threshold.
std::vector<BlockMatch> block_match(const Image& image, BlockPosition reference, const Bm3dProfile& profile);

// Two-stage BM3D: hard-thresholded collaborative filtering followed by
// empirical Wiener filtering guided by the first-stage estimate.
Image bm3d(const Image& noisy, const Bm3dProfile& profile);

// Only the first (hard-threshold) stage; exposed for inspection and tests.
Image bm3d_basic_estimate(const Image& noisy, const Bm3dProfile& profile);

}  // namespace mriprep::denoise
