#include <deque>

#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/crop.hpp"
#include "mriprep/errors.hpp"

using namespace mriprep;

namespace {

Mask random_mask(int w, int h, double density, std::uint64_t seed) {
    phantom::Rng rng(seed, 0xc0);
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, rng.uniform() < density);
    return m;
}

// Breadth-first labelling; returns the largest component, earliest seed
// in raster order winning ties.
Mask largest_component_oracle(const Mask& m, int connectivity) {
    const int w = m.width(), h = m.height();
    std::vector<int> label(m.size(), -1);
    std::vector<std::size_t> sizes;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y) || label[y * w + x] >= 0) continue;
            const int id = static_cast<int>(sizes.size());
            std::size_t n = 0;
            std::deque<std::pair<int, int>> queue{{x, y}};
            label[y * w + x] = id;
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                ++n;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0)) continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny) || label[ny * w + nx] >= 0)
                            continue;
                        label[ny * w + nx] = id;
                        queue.emplace_back(nx, ny);
                    }
            }
            sizes.push_back(n);
        }
    Mask out(w, h);
    if (sizes.empty()) return out;
    const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.set(x, y, label[y * w + x] == best);
    return out;
}

}  // namespace

TEST_CASE("binarize is a strict threshold") {
    const Image img(3, 1, std::vector<double>{0.2, 0.2 + 1e-12, 0.1});
    const Mask m = crop::binarize(img, 0.2);
    CHECK_FALSE(m.at(0, 0));
    CHECK(m.at(1, 0));
    CHECK_FALSE(m.at(2, 0));
}

TEST_CASE("largest_component matches a breadth-first oracle") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Mask m = random_mask(23, 17, 0.45, seed);
        for (int conn : {4, 8}) CHECK(crop::largest_component(m, conn) == largest_component_oracle(m, conn));
    }
    CHECK(crop::largest_component(Mask(5, 5), 8).count() == 0);
    CHECK_THROWS_AS(crop::largest_component(Mask(5, 5), 6), ArgumentError);
}

TEST_CASE("diagonal neighbours join only under 8-connectivity") {
    Mask m(4, 4);
    m.set(0, 0, true);
    m.set(1, 1, true);
    m.set(3, 3, true);
    CHECK(crop::largest_component(m, 8).count() == 2);
    CHECK(crop::largest_component(m, 4).count() == 1);
    // Equal sizes: the first in raster order wins.
    CHECK(crop::largest_component(m, 4).at(0, 0));
}

TEST_CASE("extreme_points match brute force with tie rules") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Mask m = random_mask(19, 13, 0.2, seed + 100);
        if (!m.any()) continue;
        const crop::Extremes e = crop::extreme_points(m);
        crop::Point left{1 << 20, 0}, right{-1, 0}, top{0, 1 << 20}, bottom{0, -1};
        for (int y = 0; y < m.height(); ++y)
            for (int x = 0; x < m.width(); ++x) {
                if (!m.at(x, y)) continue;
                if (x < left.x || (x == left.x && y < left.y)) left = {x, y};
                if (x > right.x || (x == right.x && y < right.y)) right = {x, y};
                if (y < top.y || (y == top.y && x < top.x)) top = {x, y};
                if (y > bottom.y || (y == bottom.y && x < bottom.x)) bottom = {x, y};
            }
        CHECK(e.left == left);
        CHECK(e.right == right);
        CHECK(e.top == top);
        CHECK(e.bottom == bottom);
    }
    CHECK_THROWS_AS(crop::extreme_points(Mask(3, 3)), EmptyRegionError);
}

TEST_CASE("crop_to_brain finds a bright rectangle") {
    Image img(100, 80, 0.0);
    phantom::fill_rect(img, 20, 30, 59, 69, 0.8);
    // A small bright speck elsewhere is not the largest component.
    phantom::fill_rect(img, 90, 5, 92, 7, 0.9);
    crop::CropOptions opt;
    opt.out_size = 40;
    const crop::CropResult r = crop::crop_to_brain(img, opt);
    CHECK_FALSE(r.used_fallback);
    CHECK(r.box == crop::Box{20, 30, 59, 69});
    CHECK(r.image.width() == 40);
    CHECK(r.image.height() == 40);
    // The box is exactly the rectangle, so the resized crop is uniform.
    for (double v : r.image.pixels()) CHECK(v == doctest::Approx(0.8));

    opt.margin = 5;
    const crop::CropResult wide = crop::crop_to_brain(img, opt);
    CHECK(wide.box == crop::Box{15, 25, 64, 74});
    opt.margin = 50;
    CHECK(crop::crop_to_brain(img, opt).box == crop::Box{0, 0, 99, 79});
}

TEST_CASE("crop_to_brain falls back on an empty scan") {
    const Image img(30, 20, 0.05);
    const crop::CropResult r = crop::crop_to_brain(img);
    CHECK(r.used_fallback);
    CHECK(r.box == crop::Box{0, 0, 29, 19});
    CHECK(r.image.width() == 150);
    for (double v : r.image.pixels()) CHECK(v == doctest::Approx(0.05));
}
