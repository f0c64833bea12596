#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/image.hpp"

using namespace mriprep;

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

LoadError::Kind load_error_kind(const std::filesystem::path& path) {
    try {
        load_pgm(path);
    } catch (const LoadError& e) {
        return e.kind();
    }
    FAIL("expected LoadError");
    return LoadError::Kind::malformed_header;
}

// Straightforward bilinear interpolation from the corner-aligned definition.
double bilinear_oracle(const Image& in, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, in.width() - 1), y1 = std::min(y0 + 1, in.height() - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * in.at(x0, y0) + fx * (1 - fy) * in.at(x1, y0) + (1 - fx) * fy * in.at(x0, y1) +
           fx * fy * in.at(x1, y1);
}

}  // namespace

TEST_CASE("image and mask construction") {
    Image a(3, 2, 0.5);
    CHECK(a.size() == 6);
    CHECK(a.at(2, 1) == 0.5);
    CHECK_THROWS_AS(Image(0, 4), ArgumentError);
    CHECK_THROWS_AS(Image(2, 2, std::vector<double>(3)), ArgumentError);
    Mask m(4, 4);
    CHECK(m.count() == 0);
    m.set(1, 2, true);
    CHECK(m.at(1, 2));
    CHECK(m.count() == 1);
}

TEST_CASE("reflect_index matches an explicitly mirrored sequence") {
    for (int n = 1; n <= 5; ++n) {
        // Period 2n: a b ... z z ... b a
        std::vector<int> period;
        for (int i = 0; i < n; ++i) period.push_back(i);
        for (int i = n - 1; i >= 0; --i) period.push_back(i);
        for (int i = -3 * n; i < 4 * n; ++i) {
            const int k = ((i % (2 * n)) + 2 * n) % (2 * n);
            CHECK(reflect_index(i, n) == period[k]);
        }
    }
    CHECK(reflect_index(-1, 4) == 0);
    CHECK(reflect_index(-4, 4) == 3);
    CHECK(reflect_index(4, 4) == 3);
}

TEST_CASE("resize_bilinear is corner aligned") {
    const Image in = testing::random_image(7, 5, 1);
    const Image out = resize_bilinear(in, 11, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 11; ++x) {
            const double sx = x * 6.0 / 10.0, sy = y * 4.0 / 8.0;
            CHECK(out.at(x, y) == doctest::Approx(bilinear_oracle(in, sx, sy)).epsilon(1e-12));
        }
    CHECK(out.at(0, 0) == in.at(0, 0));
    CHECK(out.at(10, 8) == in.at(6, 4));
    CHECK(resize_bilinear(in, 7, 5) == in);
    CHECK_THROWS_AS(resize_bilinear(in, 0, 3), ArgumentError);
}

TEST_CASE("resize of a constant image stays constant") {
    const Image in(13, 4, 0.37);
    const Image out = resize_bilinear(in, 5, 17);
    for (double v : out.pixels()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("convolve2d agrees with a direct sum") {
    const Image in = testing::random_image(9, 6, 2);
    Kernel2d k;
    k.width = 3;
    k.height = 5;
    phantom::Rng rng(3);
    k.weights.resize(15);
    for (double& w : k.weights) w = rng.uniform(-1, 1);
    for (Border border : {Border::reflect, Border::zero}) {
        const Image out = convolve2d(in, k, border);
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) {
                double s = 0.0;
                for (int j = 0; j < 5; ++j)
                    for (int i = 0; i < 3; ++i) {
                        int sx = x + i - 1, sy = y + j - 2;
                        double v;
                        if (border == Border::reflect) {
                            v = in.at(reflect_index(sx, in.width()), reflect_index(sy, in.height()));
                        } else {
                            const bool inside = sx >= 0 && sy >= 0 && sx < in.width() && sy < in.height();
                            v = inside ? in.at(sx, sy) : 0.0;
                        }
                        s += k.weights[j * 3 + i] * v;
                    }
                CHECK(out.at(x, y) == doctest::Approx(s).epsilon(1e-12));
            }
    }
    Kernel2d even;
    even.width = 2;
    even.weights = {0.5, 0.5};
    CHECK_THROWS_AS(convolve2d(in, even, Border::zero), ArgumentError);
}

TEST_CASE("histogram256 rounds to the nearest level") {
    Image img(4, 1, std::vector<double>{0.0, 1.0, 0.5 / 255.0 - 1e-9, 0.5 / 255.0 + 1e-9});
    const Histogram h = histogram256(img);
    CHECK(h.bins[0] == 2);
    CHECK(h.bins[1] == 1);
    CHECK(h.bins[255] == 1);
    CHECK(h.total() == 4);
    img.at(0, 0) = 1.01;
    CHECK_THROWS_AS(histogram256(img), RangeError);
}

TEST_CASE("psnr") {
    const Image a(8, 8, 0.5);
    Image b(8, 8, 0.6);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(std::isinf(psnr(a, a)));
    CHECK_THROWS_AS(psnr(a, Image(4, 4)), ArgumentError);
}

TEST_CASE("pgm round trip at 8 and 16 bits") {
    testing::TempDir dir("pgm");
    const Image img = testing::random_image(17, 9, 4);
    save_pgm(img, dir / "a8.pgm");
    save_pgm(img, dir / "a16.pgm", 16);
    const Image b8 = load_pgm(dir / "a8.pgm");
    const Image b16 = load_pgm(dir / "a16.pgm");
    CHECK(b8.width() == 17);
    CHECK(b8.height() == 9);
    CHECK(testing::max_abs_diff(img, b8) <= 0.5 / 255.0 + 1e-12);
    CHECK(testing::max_abs_diff(img, b16) <= 0.5 / 65535.0 + 1e-12);
    // Quantized images survive a second round trip exactly.
    save_pgm(b8, dir / "b8.pgm");
    CHECK(load_pgm(dir / "b8.pgm") == b8);
}

TEST_CASE("pgm loader rejects bad files with the right kind") {
    testing::TempDir dir("pgm_bad");
    write_bytes(dir / "magic.pgm", "P2\n2 2\n255\n0 0 0 0\n");
    CHECK(load_error_kind(dir / "magic.pgm") == LoadError::Kind::unsupported_magic);
    write_bytes(dir / "header.pgm", "P5\n2 x\n255\n");
    CHECK(load_error_kind(dir / "header.pgm") == LoadError::Kind::malformed_header);
    write_bytes(dir / "maxval.pgm", "P5\n2 2\n70000\n");
    CHECK(load_error_kind(dir / "maxval.pgm") == LoadError::Kind::malformed_header);
    write_bytes(dir / "short.pgm", std::string("P5\n2 2\n255\n") + std::string(3, '\x10'));
    CHECK(load_error_kind(dir / "short.pgm") == LoadError::Kind::truncated_payload);
    write_bytes(dir / "comment.pgm", std::string("P5\n# made by hand\n2 1\n255\n") + std::string("\x00\xff", 2));
    const Image c = load_pgm(dir / "comment.pgm");
    CHECK(c.at(0, 0) == 0.0);
    CHECK(c.at(1, 0) == 1.0);
    CHECK_THROWS_AS(load_pgm(dir / "missing.pgm"), IoError);
}

TEST_CASE("ppm input is converted with luma weights") {
    testing::TempDir dir("ppm");
    write_bytes(dir / "rgb.ppm", std::string("P6\n1 1\n255\n") + std::string("\xff\x00\x00", 3));
    CHECK(load_pgm(dir / "rgb.ppm").at(0, 0) == doctest::Approx(0.299).epsilon(1e-9));
}

TEST_CASE("save refuses out-of-range intensities") {
    testing::TempDir dir("pgm_range");
    Image img(2, 2, 0.5);
    img.at(1, 1) = 1.5;
    CHECK_THROWS_AS(save_pgm(img, dir / "x.pgm"), RangeError);
    img.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(save_pgm(img, dir / "x.pgm"), RangeError);
    CHECK_THROWS_AS(save_pgm(Image(2, 2), dir / "x.pgm", 12), ArgumentError);
}

TEST_CASE("sample_bilinear borders") {
    const Image img(2, 2, std::vector<double>{0.0, 1.0, 2.0, 3.0});
    CHECK(sample_bilinear(img, 0.5, 0.5, Border::zero) == doctest::Approx(1.5));
    CHECK(sample_bilinear(img, -1.0, 0.0, Border::zero, 0.25) == doctest::Approx(0.25));
    CHECK(sample_bilinear(img, -1.0, 0.0, Border::reflect) == doctest::Approx(0.0));
    CHECK(sample_bilinear(img, 2.0, 0.0, Border::reflect) == doctest::Approx(1.0));
}

TEST_CASE("require_finite and mean") {
    Image img(3, 1, std::vector<double>{0.1, 0.2, 0.3});
    CHECK(mean(img) == doctest::Approx(0.2));
    CHECK_NOTHROW(require_finite(img, "x"));
    img.at(2, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(require_finite(img, "x"), NumericError);
}
