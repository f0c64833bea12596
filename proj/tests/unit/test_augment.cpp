#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/augment.hpp"
#include "mriprep/errors.hpp"

using namespace mriprep;

TEST_CASE("flips are involutions with the expected orientation") {
    const Image img = testing::random_image(7, 4, 20);
    CHECK(augment::flip_h(augment::flip_h(img)) == img);
    CHECK(augment::flip_v(augment::flip_v(img)) == img);
    CHECK(augment::flip_h(img).at(0, 1) == img.at(6, 1));
    CHECK(augment::flip_v(img).at(2, 0) == img.at(2, 3));
}

TEST_CASE("quarter turns are exact and counter-clockwise as displayed") {
    const int n = 9;
    const Image img = testing::random_image(n, n, 21);
    const Image r90 = augment::rotate(img, 90.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) CHECK(r90.at(x, y) == img.at(n - 1 - y, x));
    Image r = img;
    for (int i = 0; i < 4; ++i) r = augment::rotate(r, 90.0);
    CHECK(r == img);
    CHECK(augment::rotate(img, 0.0) == img);
    CHECK(augment::rotate(img, 180.0) == augment::flip_h(augment::flip_v(img)));
}

TEST_CASE("small rotations keep the centre and fill corners") {
    const Image img(21, 21, 1.0);
    const Image r = augment::rotate(img, 30.0, Border::zero);
    CHECK(r.at(10, 10) == doctest::Approx(1.0));
    CHECK(r.at(0, 0) == 0.0);
    CHECK(augment::rotate(img, 30.0, Border::reflect).at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("integer shifts move pixels exactly") {
    const Image img = testing::random_image(10, 8, 22);
    const Image s = augment::shift(img, 0.2, -0.25);  // +2 columns, -2 rows
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x) {
            const int sx = x - 2, sy = y + 2;
            const bool inside = sx >= 0 && sy >= 0 && sx < 10 && sy < 8;
            CHECK(s.at(x, y) == doctest::Approx(inside ? img.at(sx, sy) : 0.0).epsilon(1e-12));
        }
    CHECK_THROWS_AS(augment::shift(img, 0.6, 0.0), ArgumentError);
}

TEST_CASE("draws are pure, in range and independent per transform") {
    augment::AugmentConfig cfg;
    cfg.seed = 99;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const augment::Draw d = augment::draw_parameters(cfg, i);
        const augment::Draw again = augment::draw_parameters(cfg, i);
        CHECK(d.angle == again.angle);
        CHECK(d.dx == again.dx);
        CHECK(d.hflip == again.hflip);
        CHECK(std::abs(d.angle) <= 15.0);
        CHECK(std::abs(d.dx) <= 0.1);
        CHECK(std::abs(d.dy) <= 0.1);
    }
    augment::AugmentConfig no_flips = cfg;
    no_flips.hflip = no_flips.vflip = false;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const augment::Draw a = augment::draw_parameters(cfg, i), b = augment::draw_parameters(no_flips, i);
        CHECK(a.angle == b.angle);
        CHECK(a.dx == b.dx);
        CHECK(a.dy == b.dy);
        CHECK_FALSE(b.hflip);
        CHECK_FALSE(b.vflip);
    }
    // Both flip outcomes occur.
    int h = 0;
    for (std::uint64_t i = 0; i < 100; ++i) h += augment::draw_parameters(cfg, i).hflip;
    CHECK(h > 20);
    CHECK(h < 80);
    augment::AugmentConfig other = cfg;
    other.seed = 100;
    CHECK(augment::draw_parameters(other, 0).angle != augment::draw_parameters(cfg, 0).angle);
}

TEST_CASE("augment_sample applies its draw") {
    const Image img = testing::random_image(24, 24, 23);
    augment::AugmentConfig cfg;
    cfg.seed = 5;
    for (std::uint64_t i = 0; i < 5; ++i) {
        const Image a = augment::augment_sample(img, cfg, i);
        CHECK(a == augment::apply_draw(img, augment::draw_parameters(cfg, i), cfg.fill));
        CHECK(a == augment::augment_sample(img, cfg, i));
    }
}

TEST_CASE("config validation") {
    augment::AugmentConfig cfg;
    cfg.rotation_range = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
    cfg = {};
    cfg.width_shift = 0.7;
    CHECK_THROWS_AS(cfg.validate(), ArgumentError);
}

TEST_CASE("balance plan tops every class up to the target") {
    const std::vector<augment::ClassCount> counts{{"a", 3}, {"b", 5}, {"c", 1}};
    const auto plan = augment::balance_classes(counts, 5);
    REQUIRE(plan.size() == 3);
    CHECK(plan[0].name == "a");
    CHECK(plan[0].synthetic == 2);
    CHECK(plan[0].sources == std::vector<std::size_t>{0, 1});
    CHECK(plan[1].synthetic == 0);
    CHECK(plan[2].synthetic == 4);
    CHECK(plan[2].sources == std::vector<std::size_t>{0, 0, 0, 0});
    const auto more = augment::balance_classes(counts, 8);
    CHECK(more[0].sources == std::vector<std::size_t>{0, 1, 2, 0, 1});
    CHECK_THROWS_AS(augment::balance_classes(counts, 4), ArgumentError);
    CHECK_THROWS_AS(augment::balance_classes({{"x", 0}, {"y", 2}}, 2), ArgumentError);
}
