#include "mriprep/augment.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "mriprep/errors.hpp"

namespace mriprep::augment {

void AugmentConfig::validate() const {
    if (!(rotation_range >= 0.0 && rotation_range <= 180.0))
        throw ArgumentError("augment: rotation_range must be in [0, 180]");
    if (!(width_shift >= 0.0 && width_shift <= 0.5) || !(height_shift >= 0.0 && height_shift <= 0.5))
        throw ArgumentError("augment: shift ranges must be in [0, 0.5]");
}

Image flip_h(const Image& image) {
    Image out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) out.at(x, y) = image.at(image.width() - 1 - x, y);
    return out;
}

Image flip_v(const Image& image) {
    Image out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        const auto src = image.row(image.height() - 1 - y);
        std::copy(src.begin(), src.end(), out.row(y).begin());
    }
    return out;
}

namespace {

// Rounds values within 1e-9 of an integer so grid-aligned transforms stay exact.
double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

void exact_trig(double degrees, double& c, double& s) {
    const double turns = degrees / 90.0;
    if (turns == std::round(turns)) {
        static constexpr double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const auto k = static_cast<long long>(std::round(turns));
        const int q = static_cast<int>(((k % 4) + 4) % 4);
        c = cs[q][0];
        s = cs[q][1];
        return;
    }
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
}

double unit(std::mt19937_64& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double symmetric(std::mt19937_64& engine, double range) { return (2.0 * unit(engine) - 1.0) * range; }

}  // namespace

Image rotate(const Image& image, double degrees, Border fill) {
    if (degrees == 0.0) return image;
    double c = 0.0, s = 0.0;
    exact_trig(degrees, c, s);
    const double cx = (image.width() - 1) / 2.0, cy = (image.height() - 1) / 2.0;
    Image out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const double ox = x - cx, oy = y - cy;
            const double sx = snap(cx + ox * c - oy * s);
            const double sy = snap(cy + ox * s + oy * c);
            out.at(x, y) = sample_bilinear(image, sx, sy, fill);
        }
    return out;
}

Image shift(const Image& image, double dx, double dy, Border fill) {
    if (!(std::abs(dx) <= 0.5) || !(std::abs(dy) <= 0.5)) throw ArgumentError("shift: fractions must be in [-0.5, 0.5]");
    if (dx == 0.0 && dy == 0.0) return image;
    const double ox = snap(dx * image.width()), oy = snap(dy * image.height());
    Image out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) out.at(x, y) = sample_bilinear(image, x - ox, y - oy, fill);
    return out;
}

Draw draw_parameters(const AugmentConfig& config, std::uint64_t draw_index) {
    config.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(draw_index), static_cast<std::uint32_t>(draw_index >> 32)};
    std::mt19937_64 engine(seq);
    Draw d;
    d.angle = symmetric(engine, config.rotation_range);
    d.dx = symmetric(engine, config.width_shift);
    d.dy = symmetric(engine, config.height_shift);
    const bool h = unit(engine) < 0.5;
    const bool v = unit(engine) < 0.5;
    d.hflip = config.hflip && h;
    d.vflip = config.vflip && v;
    return d;
}

Image apply_draw(const Image& image, const Draw& draw, Border fill) {
    Image out = shift(rotate(image, draw.angle, fill), draw.dx, draw.dy, fill);
    if (draw.hflip) out = flip_h(out);
    if (draw.vflip) out = flip_v(out);
    return out;
}

Image augment_sample(const Image& image, const AugmentConfig& config, std::uint64_t draw_index) {
    return apply_draw(image, draw_parameters(config, draw_index), config.fill);
}

std::vector<ClassPlan> balance_classes(const std::vector<ClassCount>& counts, std::size_t target) {
    std::vector<ClassPlan> plan;
    plan.reserve(counts.size());
    for (const ClassCount& c : counts) {
        if (c.count > target)
            throw ArgumentError("balance_classes: target " + std::to_string(target) + " is below class '" + c.name +
                                "' with " + std::to_string(c.count));
        ClassPlan p{c.name, target - c.count, {}};
        if (p.synthetic > 0 && c.count == 0)
            throw ArgumentError("balance_classes: class '" + c.name + "' has no source images");
        p.sources.reserve(p.synthetic);
        for (std::size_t k = 0; k < p.synthetic; ++k) p.sources.push_back(k % c.count);
        plan.push_back(std::move(p));
    }
    return plan;
}

}  // namespace mriprep::augment
