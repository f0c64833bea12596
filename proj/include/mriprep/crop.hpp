#pragma once

#include "mriprep/image.hpp"

namespace mriprep::crop {

struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

// Extreme points of a connected region. Ties on the primary coordinate go to
// the smaller secondary coordinate.
struct Extremes {
    Point left;
    Point right;
    Point top;
    Point bottom;
};

// Inclusive pixel rectangle.
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const noexcept { return x1 - x0 + 1; }
    int height() const noexcept { return y1 - y0 + 1; }
    friend bool operator==(const Box&, const Box&) = default;
};

inline constexpr double kDefaultThreshold = 45.0 / 255.0;

struct CropOptions {
    double threshold = kDefaultThreshold;
    int margin = 0;
    int out_size = 150;
    int connectivity = 8;
    double blur_sigma = 1.0;
};

struct CropResult {
    Image image;
    Box box;
    bool used_fallback = false;  // no foreground: full frame was resized
};

// Bit set iff intensity > threshold.
Mask binarize(const Image& image, double threshold);

// Only the component with the most pixels (first in raster order on ties).
// connectivity is 4 or 8. An empty mask yields an empty mask.
Mask largest_component(const Mask& mask, int connectivity = 8);

// Throws EmptyRegionError for an empty mask.
Extremes extreme_points(const Mask& mask);

// Blur, threshold, keep the largest component, crop to its extreme points
// (expanded by margin, clamped) and resize to out_size x out_size. A scan with
// no foreground falls back to a full-frame resize and logs a warning.
CropResult crop_to_brain(const Image& image, const CropOptions& options = {});

}  // namespace mriprep::crop
