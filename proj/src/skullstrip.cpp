#include "mriprep/skullstrip.hpp"

#include <cmath>
#include <vector>

#include "mriprep/crop.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"

namespace mriprep::skull {

namespace {

struct OtsuScan {
    int threshold = 0;
    long double between = 0.0L;  // sigma_B^2 at threshold
};

OtsuScan scan(const Histogram& hist) {
    int populated = 0;
    __int128 n = 0, s = 0;
    for (int b = 0; b < 256; ++b) {
        if (hist.bins[b] > 0) ++populated;
        n += hist.bins[b];
        s += static_cast<__int128>(hist.bins[b]) * b;
    }
    if (populated < 2) throw DegenerateHistogramError("otsu: fewer than two populated bins");

    // sigma_B^2(t) = (n1 * s0 - n0 * s1)^2 / (N^2 * n0 * n1), from exact
    // integer class counts and sums.
    OtsuScan best;
    bool have = false;
    __int128 n0 = 0, s0 = 0;
    const long double total = static_cast<long double>(n);
    for (int t = 0; t < 255; ++t) {
        n0 += hist.bins[t];
        s0 += static_cast<__int128>(hist.bins[t]) * t;
        const __int128 n1 = n - n0, s1 = s - s0;
        if (n0 == 0 || n1 == 0) continue;
        const long double d = static_cast<long double>(n1 * s0 - n0 * s1);
        const long double value =
            d * d / (total * total * static_cast<long double>(n0) * static_cast<long double>(n1));
        if (!have || value > best.between) {
            best = {t, value};
            have = true;
        }
    }
    return best;
}

// Row half-widths of the disk structuring element.
std::vector<int> disk_extents(int radius) {
    std::vector<int> ext(2 * radius + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        int wx = 0;
        while ((wx + 1) * (wx + 1) + dy * dy <= radius * radius) ++wx;
        ext[dy + radius] = wx;
    }
    return ext;
}

// Row prefix sums of a w x h binary grid: row y spans [y * (w + 1), ...).
std::vector<int> row_prefix(const std::vector<std::uint8_t>& grid, int w, int h) {
    std::vector<int> pre(static_cast<std::size_t>(w + 1) * h, 0);
    for (int y = 0; y < h; ++y) {
        int* p = pre.data() + static_cast<std::size_t>(y) * (w + 1);
        for (int x = 0; x < w; ++x) p[x + 1] = p[x] + grid[static_cast<std::size_t>(y) * w + x];
    }
    return pre;
}

// Count of set cells in row y over [x0, x1], clipped to the grid.
int row_count(const std::vector<int>& pre, int w, int h, int y, int x0, int x1) {
    if (y < 0 || y >= h) return 0;
    x0 = std::max(x0, 0);
    x1 = std::min(x1, w - 1);
    if (x1 < x0) return 0;
    const int* p = pre.data() + static_cast<std::size_t>(y) * (w + 1);
    return p[x1 + 1] - p[x0];
}

// Morphology on a grid padded by `pad` background cells on every side.
std::vector<std::uint8_t> padded_grid(const Mask& mask, int pad) {
    const int w = mask.width() + 2 * pad, h = mask.height() + 2 * pad;
    std::vector<std::uint8_t> grid(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            grid[static_cast<std::size_t>(y + pad) * w + x + pad] = mask.at(x, y) ? 1 : 0;
    return grid;
}

std::vector<std::uint8_t> dilate_grid(const std::vector<std::uint8_t>& grid, int w, int h, int radius) {
    const auto ext = disk_extents(radius);
    const auto pre = row_prefix(grid, w, h);
    std::vector<std::uint8_t> out(grid.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int dy = -radius; dy <= radius; ++dy) {
                const int wx = ext[dy + radius];
                if (row_count(pre, w, h, y + dy, x - wx, x + wx) > 0) {
                    out[static_cast<std::size_t>(y) * w + x] = 1;
                    break;
                }
            }
        }
    return out;
}

// Erosion evaluated on the cells of `region` (x0, y0, rw, rh) only; cells
// outside the grid count as background.
std::vector<std::uint8_t> erode_grid(const std::vector<std::uint8_t>& grid, int w, int h, int radius, int x0,
                                     int y0, int rw, int rh) {
    const auto ext = disk_extents(radius);
    const auto pre = row_prefix(grid, w, h);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(rw) * rh, 0);
    for (int y = 0; y < rh; ++y)
        for (int x = 0; x < rw; ++x) {
            const int gx = x + x0, gy = y + y0;
            bool all = true;
            for (int dy = -radius; dy <= radius && all; ++dy) {
                const int wx = ext[dy + radius];
                all = row_count(pre, w, h, gy + dy, gx - wx, gx + wx) == 2 * wx + 1;
            }
            out[static_cast<std::size_t>(y) * rw + x] = all ? 1 : 0;
        }
    return out;
}

Mask from_grid(const std::vector<std::uint8_t>& grid, int gw, int pad, int w, int h) {
    Mask out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.set(x, y, grid[static_cast<std::size_t>(y + pad) * gw + x + pad] != 0);
    return out;
}

}  // namespace

int otsu_threshold(const Histogram& hist) { return scan(hist).threshold; }

BimodalityReport bimodality_check(const Histogram& hist, double cutoff) {
    const std::uint64_t n = hist.total();
    if (n == 0) throw ArgumentError("bimodality_check: empty histogram");
    long double sum = 0.0L, sum2 = 0.0L;
    for (int b = 0; b < 256; ++b) {
        sum += static_cast<long double>(hist.bins[b]) * b;
        sum2 += static_cast<long double>(hist.bins[b]) * b * b;
    }
    const long double mu = sum / n;
    const long double variance = sum2 / n - mu * mu;
    if (!(variance > 0.0L)) throw DegenerateHistogramError("bimodality_check: zero intensity variance");
    const OtsuScan best = scan(hist);
    BimodalityReport report;
    report.threshold = best.threshold;
    report.score = static_cast<double>(std::min(1.0L, std::max(0.0L, best.between / variance)));
    report.is_bimodal = report.score >= cutoff;
    return report;
}

Mask dilate(const Mask& mask, int radius) {
    if (radius < 1) throw ArgumentError("morphology radius must be >= 1");
    const int gw = mask.width() + 2 * radius, gh = mask.height() + 2 * radius;
    const auto grid = dilate_grid(padded_grid(mask, radius), gw, gh, radius);
    return from_grid(grid, gw, radius, mask.width(), mask.height());
}

Mask erode(const Mask& mask, int radius) {
    if (radius < 1) throw ArgumentError("morphology radius must be >= 1");
    const int gw = mask.width() + 2 * radius, gh = mask.height() + 2 * radius;
    const auto grid = erode_grid(padded_grid(mask, radius), gw, gh, radius, 0, 0, gw, gh);
    return from_grid(grid, gw, radius, mask.width(), mask.height());
}

Mask closing(const Mask& mask, int radius) {
    if (radius < 1) throw ArgumentError("closing radius must be >= 1");
    // The dilation is exact on the padded grid (it cannot reach further than
    // `radius` outside the frame); the erosion is only needed on the frame.
    const int gw = mask.width() + 2 * radius, gh = mask.height() + 2 * radius;
    const auto dilated = dilate_grid(padded_grid(mask, radius), gw, gh, radius);
    const auto eroded = erode_grid(dilated, gw, gh, radius, radius, radius, mask.width(), mask.height());
    Mask out(mask.width(), mask.height());
    auto bits = out.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = eroded[i];
    return out;
}

StripResult strip_skull(const Image& image, const StripOptions& options) {
    if (options.closing_radius < 0) throw ArgumentError("strip_skull: closing radius must be >= 0");
    StripResult result;
    bool bimodal = false;
    try {
        result.report = bimodality_check(histogram256(image), options.cutoff);
        bimodal = result.report.is_bimodal;
    } catch (const DegenerateHistogramError&) {
        bimodal = false;
    }
    if (!bimodal) {
        log::warn("strip: scan is not bimodal (score " + std::to_string(result.report.score) +
                  "), passing through unchanged");
        result.stripped = image;
        result.brain = Mask(image.width(), image.height(), true);
        result.passthrough = true;
        return result;
    }

    Mask foreground(image.width(), image.height());
    {
        auto bits = foreground.bits();
        const auto px = image.pixels();
        for (std::size_t i = 0; i < px.size(); ++i)
            bits[i] = std::lround(px[i] * 255.0) > result.report.threshold ? 1 : 0;
    }
    Mask brain = crop::largest_component(foreground, 8);
    if (options.closing_radius > 0) brain = closing(brain, options.closing_radius);

    result.stripped = image;
    auto px = result.stripped.pixels();
    for (std::size_t i = 0; i < px.size(); ++i)
        if (!brain[i]) px[i] = 0.0;
    result.brain = std::move(brain);
    return result;
}

double dice(const Mask& a, const Mask& b) {
    if (a.width() != b.width() || a.height() != b.height()) throw ArgumentError("dice: mask size mismatch");
    std::size_t both = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i];
        nb += b[i];
        both += a[i] && b[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

}  // namespace mriprep::skull
