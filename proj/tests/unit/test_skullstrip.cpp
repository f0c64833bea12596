#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/skullstrip.hpp"

using namespace mriprep;

namespace {

Mask random_mask(int w, int h, double density, std::uint64_t seed) {
    phantom::Rng rng(seed, 0x5c);
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, rng.uniform() < density);
    return m;
}

// Direct disk dilation; out-of-frame pixels are background.
Mask dilate_oracle(const Mask& m, int r) {
    Mask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool hit = false;
            for (int dy = -r; dy <= r && !hit; ++dy)
                for (int dx = -r; dx <= r && !hit; ++dx) {
                    const int sx = x + dx, sy = y + dy;
                    hit = dx * dx + dy * dy <= r * r && sx >= 0 && sy >= 0 && sx < m.width() && sy < m.height() &&
                          m.at(sx, sy);
                }
            out.set(x, y, hit);
        }
    return out;
}

Mask erode_oracle(const Mask& m, int r) {
    Mask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy)
                for (int dx = -r; dx <= r && all; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int sx = x + dx, sy = y + dy;
                    all = sx >= 0 && sy >= 0 && sx < m.width() && sy < m.height() && m.at(sx, sy);
                }
            out.set(x, y, all);
        }
    return out;
}

bool subset(const Mask& a, const Mask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && !b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("morphology matches brute-force disks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mask m = random_mask(25, 19, seed % 2 ? 0.1 : 0.7, seed);
        for (int r : {1, 2, 4}) {
            CHECK(skull::dilate(m, r) == dilate_oracle(m, r));
            CHECK(skull::erode(m, r) == erode_oracle(m, r));
        }
    }
}

TEST_CASE("closing is extensive and idempotent") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Mask m = random_mask(30, 30, 0.5, seed + 50);
        const Mask c = skull::closing(m, 3);
        CHECK(subset(m, c));
        CHECK(skull::closing(c, 3) == c);
        CHECK(subset(skull::erode(m, 2), m));
        CHECK(subset(m, skull::dilate(m, 2)));
    }
    CHECK_THROWS_AS(skull::closing(random_mask(8, 8, 0.5, 1), 0), ArgumentError);
    CHECK_THROWS_AS(skull::dilate(random_mask(8, 8, 0.5, 1), 0), ArgumentError);
}

TEST_CASE("otsu on two spikes takes the smallest separating threshold") {
    Histogram h;
    h.bins[50] = 100;
    h.bins[200] = 300;
    CHECK(skull::otsu_threshold(h) == 50);
    Histogram one;
    one.bins[10] = 5;
    CHECK_THROWS_AS(skull::otsu_threshold(one), DegenerateHistogramError);
}

TEST_CASE("bimodality score separates two lumps from a flat spread") {
    Histogram two;
    two.bins[40] = 500;
    two.bins[41] = 500;
    two.bins[210] = 500;
    two.bins[211] = 500;
    const skull::BimodalityReport a = skull::bimodality_check(two);
    CHECK(a.is_bimodal);
    CHECK(a.score > 0.99);
    CHECK(a.score <= 1.0);

    Histogram flat;
    for (auto& b : flat.bins) b = 10;
    const skull::BimodalityReport f = skull::bimodality_check(flat);
    // A uniform distribution splits at best into 3/4 explained variance.
    CHECK(f.score == doctest::Approx(0.75).epsilon(0.01));
    CHECK(f.is_bimodal);
    CHECK_FALSE(skull::bimodality_check(flat, 0.8).is_bimodal);

    CHECK_THROWS_AS(skull::bimodality_check(Histogram{}), ArgumentError);
    Histogram spike;
    spike.bins[7] = 3;
    CHECK_THROWS_AS(skull::bimodality_check(spike), DegenerateHistogramError);
}

TEST_CASE("dice") {
    Mask a(4, 4), b(4, 4);
    CHECK(skull::dice(a, b) == 1.0);
    a.set(0, 0, true);
    a.set(1, 0, true);
    b.set(1, 0, true);
    CHECK(skull::dice(a, b) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(skull::dice(a, Mask(3, 3)), ArgumentError);
}

TEST_CASE("strip_skull recovers the phantom brain") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const phantom::HeadPhantom head = phantom::head_phantom(seed);
        const skull::StripResult r = skull::strip_skull(head.image);
        CHECK_FALSE(r.passthrough);
        CHECK(skull::dice(r.brain, head.brain) >= 0.95);
        CHECK(subset(head.holes, r.brain));
        for (std::size_t i = 0; i < r.brain.size(); ++i)
            if (!r.brain[i]) CHECK(r.stripped.pixels()[i] == 0.0);
    }
}

TEST_CASE("without closing the punched holes stay open") {
    const phantom::HeadPhantom head = phantom::head_phantom(3);
    skull::StripOptions opt;
    opt.closing_radius = 0;
    const skull::StripResult r = skull::strip_skull(head.image, opt);
    CHECK_FALSE(subset(head.holes, r.brain));
}

TEST_CASE("a non-bimodal scan passes through") {
    const Image img = testing::random_image(40, 40, 12);
    skull::StripOptions opt;
    opt.cutoff = 0.9;
    const skull::StripResult r = skull::strip_skull(img, opt);
    CHECK(r.passthrough);
    CHECK(r.stripped == img);
    CHECK(r.brain.count() == r.brain.size());
}
