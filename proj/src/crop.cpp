#include "mriprep/crop.hpp"

#include <algorithm>
#include <vector>

#include "mriprep/denoise.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"

namespace mriprep::crop {

Mask binarize(const Image& image, double threshold) {
    Mask out(image.width(), image.height());
    const auto px = image.pixels();
    auto bits = out.bits();
    for (std::size_t i = 0; i < px.size(); ++i) bits[i] = px[i] > threshold ? 1 : 0;
    return out;
}

Mask largest_component(const Mask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8) throw ArgumentError("connectivity must be 4 or 8");
    const int w = mask.width(), h = mask.height();
    std::vector<int> label(mask.size(), 0);
    std::vector<std::size_t> stack;
    int best_label = 0;
    std::size_t best_size = 0;
    int next = 0;

    static constexpr int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};

    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || label[start] != 0) continue;
        ++next;
        std::size_t size = 0;
        label[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size;
            const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
            for (int k = 0; k < connectivity; ++k) {
                const int nx = x + dx8[k], ny = y + dy8[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                if (mask[j] && label[j] == 0) {
                    label[j] = next;
                    stack.push_back(j);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_label = next;
        }
    }

    Mask out(w, h);
    if (best_label == 0) return out;
    auto bits = out.bits();
    for (std::size_t i = 0; i < label.size(); ++i) bits[i] = label[i] == best_label ? 1 : 0;
    return out;
}

Extremes extreme_points(const Mask& mask) {
    bool found = false;
    Extremes e;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            const Point p{x, y};
            if (!found) {
                e = {p, p, p, p};
                found = true;
                continue;
            }
            // Raster order visits smaller y first, then smaller x, so strict
            // comparisons implement the tie rules for left/right/top; bottom
            // needs the explicit x tie-break.
            if (x < e.left.x) e.left = p;
            if (x > e.right.x) e.right = p;
            if (y < e.top.y) e.top = p;
            if (y > e.bottom.y || (y == e.bottom.y && x < e.bottom.x)) e.bottom = p;
        }
    }
    if (!found) throw EmptyRegionError("extreme_points: mask is empty");
    return e;
}

CropResult crop_to_brain(const Image& image, const CropOptions& options) {
    if (options.out_size < 1) throw ArgumentError("crop: out_size must be >= 1");
    if (options.margin < 0) throw ArgumentError("crop: margin must be >= 0");
    const Image blurred = denoise::gaussian_filter(image, options.blur_sigma);
    const Mask region = largest_component(binarize(blurred, options.threshold), options.connectivity);

    CropResult result;
    if (!region.any()) {
        log::warn("crop: no foreground above threshold, resizing the full frame");
        result.box = {0, 0, image.width() - 1, image.height() - 1};
        result.image = resize_bilinear(image, options.out_size, options.out_size);
        result.used_fallback = true;
        return result;
    }

    // The blurred mask picks the component; the box is taken from the original
    // pixels above threshold inside it, so blur spread does not widen the crop.
    Mask support = binarize(image, options.threshold);
    {
        auto bits = support.bits();
        const auto keep = region.bits();
        for (std::size_t i = 0; i < bits.size(); ++i) bits[i] &= keep[i];
    }
    const Extremes e = extreme_points(support.any() ? support : region);
    Box box{e.left.x - options.margin, e.top.y - options.margin, e.right.x + options.margin,
            e.bottom.y + options.margin};
    box.x0 = std::max(box.x0, 0);
    box.y0 = std::max(box.y0, 0);
    box.x1 = std::min(box.x1, image.width() - 1);
    box.y1 = std::min(box.y1, image.height() - 1);

    Image cropped(box.width(), box.height());
    for (int y = 0; y < cropped.height(); ++y)
        for (int x = 0; x < cropped.width(); ++x) cropped.at(x, y) = image.at(box.x0 + x, box.y0 + y);

    result.box = box;
    result.image = resize_bilinear(cropped, options.out_size, options.out_size);
    return result;
}

}  // namespace mriprep::crop
