#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mriprep/image.hpp"

namespace mriprep::augment {

struct AugmentConfig {
    double rotation_range = 15.0;  // degrees, samples in [-range, range]
    double width_shift = 0.1;      // fraction of width
    double height_shift = 0.1;     // fraction of height
    bool hflip = true;
    bool vflip = true;
    Border fill = Border::zero;
    std::uint64_t seed = 0;

    void validate() const;
};

// Parameters of one augmentation draw.
struct Draw {
    double angle = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    bool hflip = false;
    bool vflip = false;
};

Image flip_h(const Image& image);
Image flip_v(const Image& image);

// Counter-clockwise as displayed (y pointing down), about ((W-1)/2, (H-1)/2).
// Multiples of 90 degrees use exact trigonometry.
Image rotate(const Image& image, double degrees, Border fill = Border::zero);

// out(x, y) = in(x - dx * W, y - dy * H). |dx|, |dy| <= 0.5.
Image shift(const Image& image, double dx, double dy, Border fill = Border::zero);

// Pure function of (config.seed, draw_index). The same number of variates is
// consumed whatever the ranges and flags, so disabling one transform does not
// perturb the others.
Draw draw_parameters(const AugmentConfig& config, std::uint64_t draw_index);

// rotate -> shift -> flips, using draw_parameters(config, draw_index).
Image augment_sample(const Image& image, const AugmentConfig& config, std::uint64_t draw_index);
Image apply_draw(const Image& image, const Draw& draw, Border fill);

struct ClassCount {
    std::string name;
    std::size_t count = 0;
};

struct ClassPlan {
    std::string name;
    std::size_t synthetic = 0;
    std::vector<std::size_t> sources;  // source index per synthetic sample, round-robin
};

// Synthetic samples needed to bring every class to `target`. Throws
// ArgumentError when target is below the largest class or a class needing
// samples is empty.
std::vector<ClassPlan> balance_classes(const std::vector<ClassCount>& counts, std::size_t target);

}  // namespace mriprep::augment
