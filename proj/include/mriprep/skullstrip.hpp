#pragma once

#include "mriprep/image.hpp"

namespace mriprep::skull {

struct BimodalityReport {
    bool is_bimodal = false;
    double score = 0.0;  // between-class variance / total variance at the Otsu threshold
    int threshold = 0;   // Otsu bin index
};

inline constexpr double kDefaultCutoff = 0.6;
inline constexpr int kDefaultClosingRadius = 5;

// Bin t maximizing w0 * w1 * (mu0 - mu1)^2 with foreground = bins > t; the
// smallest t wins ties. Throws DegenerateHistogramError with < 2 populated bins.
int otsu_threshold(const Histogram& hist);

// Throws ArgumentError on an empty histogram and DegenerateHistogramError
// when the total variance is zero.
BimodalityReport bimodality_check(const Histogram& hist, double cutoff = kDefaultCutoff);

// Disk structuring element {dx^2 + dy^2 <= radius^2}. Pixels outside the
// frame are background, so closing is extensive and idempotent on the frame.
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);
Mask closing(const Mask& mask, int radius);

struct StripOptions {
    double cutoff = kDefaultCutoff;
    int closing_radius = kDefaultClosingRadius;  // 0 disables closing
};

struct StripResult {
    Image stripped;
    Mask brain;
    BimodalityReport report;
    bool passthrough = false;  // scan was not bimodal; image returned unchanged
};

// Otsu foreground -> largest 8-connected component -> closing -> zero the
// background. Non-bimodal scans pass through with a full mask and a warning.
StripResult strip_skull(const Image& image, const StripOptions& options = {});

// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const Mask& a, const Mask& b);

}  // namespace mriprep::skull
