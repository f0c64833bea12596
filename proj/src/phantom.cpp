#include "mriprep/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mriprep/errors.hpp"
#include "mriprep/metrics.hpp"

namespace mriprep::phantom {

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : engine_([&] {
          std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                            static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
          return std::mt19937_64(seq);
      }()) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::integer(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>((static_cast<unsigned __int128>(engine_()) * span) >> 64);
}

Image add_gaussian_noise(const Image& image, double sigma, std::uint64_t seed) {
    Rng rng(seed, 0x4015e);
    Image out = image;
    for (double& v : out.pixels()) v += sigma * rng.normal();
    return out;
}

void fill_disk(Image& image, double cx, double cy, double radius, double value) {
    fill_ring(image, cx, cy, -1.0, radius, value);
}

void fill_ring(Image& image, double cx, double cy, double inner, double outer, double value) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - outer)));
    const int y1 = std::min(image.height() - 1, static_cast<int>(std::ceil(cy + outer)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - outer)));
    const int x1 = std::min(image.width() - 1, static_cast<int>(std::ceil(cx + outer)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (d2 <= outer * outer && (inner < 0.0 || d2 > inner * inner)) image.at(x, y) = value;
        }
}

void fill_rect(Image& image, int x0, int y0, int x1, int y1, double value) {
    for (int y = std::max(0, y0); y <= std::min(image.height() - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(image.width() - 1, x1); ++x) image.at(x, y) = value;
}

Image geometric_phantom(int size) {
    Image img(size, size, 0.2);
    const double s = size / 128.0;
    auto px = [&](double v) { return static_cast<int>(std::lround(v * s)); };
    fill_rect(img, px(12), px(14), px(58), px(52), 0.8);
    fill_rect(img, px(24), px(26), px(44), px(40), 0.5);
    fill_disk(img, 90 * s, 36 * s, 22 * s, 0.5);
    fill_disk(img, 90 * s, 36 * s, 9 * s, 0.8);
    fill_rect(img, px(16), px(76), px(112), px(84), 0.5);
    // Right triangle with vertices (70, 96), (118, 96), (118, 122).
    for (int y = px(96); y <= px(122); ++y)
        for (int x = px(70); x <= px(118); ++x)
            if ((x - 70 * s) * (26.0 / 48.0) >= (y - 96 * s) && x < size && y < size) img.at(x, y) = 0.8;
    fill_disk(img, 36 * s, 108 * s, 14 * s, 0.8);
    return img;
}

Image two_tissue_phantom(int width, int height, int band) {
    Image img(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(x, y) = (x / band) % 2 ? 0.8 : 0.4;
    return img;
}

Image sine_log_field(int width, int height, double amplitude) {
    Image f(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            f.at(x, y) = amplitude * std::sin(std::numbers::pi * x / width) * std::sin(std::numbers::pi * y / height);
    return f;
}

HeadPhantom head_phantom(std::uint64_t seed, int size) {
    Rng rng(seed, 0x4ead);
    const double c = (size - 1) / 2.0;
    const double cx = c + rng.uniform(-4.0, 4.0), cy = c + rng.uniform(-4.0, 4.0);
    const double brain_r = size * rng.uniform(0.28, 0.33);
    const double gap = rng.uniform(3.0, 5.0);
    const double skull_w = rng.uniform(3.0, 5.0);
    const double brain_level = rng.uniform(0.55, 0.7);

    HeadPhantom p;
    p.image = Image(size, size, 0.0);
    p.brain = Mask(size, size);
    p.holes = Mask(size, size);
    fill_ring(p.image, cx, cy, brain_r + gap, brain_r + gap + skull_w, rng.uniform(0.85, 0.95));
    fill_disk(p.image, cx, cy, brain_r, brain_level);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= brain_r * brain_r) p.brain.set(x, y, true);

    // Small dark holes well inside the brain, each narrower than the closing disk.
    const int holes = rng.integer(2, 5);
    for (int h = 0; h < holes; ++h) {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double r = rng.uniform(0.0, brain_r - 10.0);
        const double hx = cx + r * std::cos(a), hy = cy + r * std::sin(a);
        const double hr = rng.uniform(1.0, 3.0);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if ((x - hx) * (x - hx) + (y - hy) * (y - hy) <= hr * hr && p.brain.at(x, y)) {
                    p.image.at(x, y) = 0.0;
                    p.holes.set(x, y, true);
                }
    }
    for (double& v : p.image.pixels()) v = std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (p.holes.at(x, y)) p.image.at(x, y) = 0.0;
    return p;
}

namespace {

void textured_background(Image& img, Rng& rng) {
    // Smooth low-amplitude shading plus pixel noise.
    const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, 6.28);
    const double base = rng.uniform(0.05, 0.2);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            img.at(x, y) = base + 0.04 * std::sin(fx * x / img.width() * 6.28 + fy * y / img.height() * 6.28 + ph);
}

void finish(Image& img, Rng& rng) {
    for (double& v : img.pixels()) v = std::clamp(v + 0.04 * rng.normal(), 0.0, 1.0);
}

}  // namespace

Image shape_image(ShapeClass kind, Rng& rng, int size) {
    Image img(size, size);
    textured_background(img, rng);
    const double s = size / 150.0;
    const double level = rng.uniform(0.55, 0.95);
    const double cx = rng.uniform(0.35, 0.65) * size, cy = rng.uniform(0.35, 0.65) * size;
    switch (kind) {
        case ShapeClass::disk:
            fill_disk(img, cx, cy, rng.uniform(18.0, 32.0) * s, level);
            break;
        case ShapeClass::ring: {
            const double r = rng.uniform(22.0, 34.0) * s;
            fill_ring(img, cx, cy, r - rng.uniform(4.0, 7.0) * s, r, level);
            break;
        }
        case ShapeClass::cross: {
            const int half = static_cast<int>(rng.uniform(20.0, 32.0) * s);
            const int arm = static_cast<int>(rng.uniform(4.0, 7.0) * s);
            const int x = static_cast<int>(cx), y = static_cast<int>(cy);
            fill_rect(img, x - half, y - arm, x + half, y + arm, level);
            fill_rect(img, x - arm, y - half, x + arm, y + half, level);
            break;
        }
        case ShapeClass::dots: {
            const int n = rng.integer(5, 9);
            for (int i = 0; i < n; ++i)
                fill_disk(img, rng.uniform(0.15, 0.85) * size, rng.uniform(0.15, 0.85) * size,
                          rng.uniform(3.0, 6.0) * s, level);
            break;
        }
    }
    finish(img, rng);
    return img;
}

nnet::Dataset shape_dataset(std::size_t per_class, std::uint64_t seed, int size) {
    nnet::Dataset data(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    Rng rng(seed, 0x54a9e);
    for (std::size_t i = 0; i < per_class; ++i)
        for (int k = 0; k < 4; ++k) data.add(shape_image(static_cast<ShapeClass>(k), rng, size), k);
    return data;
}

nnet::Dataset source_dataset(std::size_t per_class, std::uint64_t seed, int size) {
    nnet::Dataset data(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    Rng rng(seed, 0x50a7ce);
    const double s = size / 150.0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (int k = 0; k < 4; ++k) {
            Image img(size, size);
            textured_background(img, rng);
            const double level = rng.uniform(0.55, 0.95);
            const double cx = rng.uniform(0.35, 0.65) * size, cy = rng.uniform(0.35, 0.65) * size;
            const int x = static_cast<int>(cx), y = static_cast<int>(cy);
            switch (k) {
                case 0: {
                    const int h = static_cast<int>(rng.uniform(16.0, 28.0) * s);
                    fill_rect(img, x - h, y - h, x + h, y + h, level);
                    break;
                }
                case 1: {
                    const int h = static_cast<int>(rng.uniform(20.0, 32.0) * s);
                    const int t = static_cast<int>(rng.uniform(4.0, 7.0) * s);
                    fill_rect(img, x - h, y - h, x + h, y - h + t, level);
                    fill_rect(img, x - h, y + h - t, x + h, y + h, level);
                    fill_rect(img, x - h, y - h, x - h + t, y + h, level);
                    fill_rect(img, x + h - t, y - h, x + h, y + h, level);
                    break;
                }
                case 2: {
                    // Diagonal cross: |dx - dy| or |dx + dy| within the arm width.
                    const double half = rng.uniform(16.0, 24.0) * s;
                    const double arm = rng.uniform(4.0, 7.0) * s;
                    for (int py = 0; py < size; ++py)
                        for (int px = 0; px < size; ++px) {
                            const double dx = px - cx, dy = py - cy;
                            if (std::max(std::abs(dx), std::abs(dy)) > half) continue;
                            if (std::abs(dx - dy) <= arm || std::abs(dx + dy) <= arm) img.at(px, py) = level;
                        }
                    break;
                }
                default: {
                    const int n = rng.integer(5, 9);
                    for (int d = 0; d < n; ++d) {
                        const int qx = static_cast<int>(rng.uniform(0.15, 0.85) * size);
                        const int qy = static_cast<int>(rng.uniform(0.15, 0.85) * size);
                        const int h = static_cast<int>(rng.uniform(3.0, 5.0) * s);
                        fill_rect(img, qx - h, qy - h, qx + h, qy + h, level);
                    }
                    break;
                }
            }
            finish(img, rng);
            data.add(img, k);
        }
    return data;
}

void write_phantom_tree(const std::filesystem::path& root, std::size_t per_class, std::uint64_t seed, int size) {
    Rng rng(seed, 0x72ee);
    for (int k = 0; k < metrics::kNumClasses; ++k) {
        const std::string cls(metrics::kClassNames[k]);
        const std::filesystem::path dir = root / cls;
        std::filesystem::create_directories(dir);
        for (std::size_t i = 0; i < per_class; ++i) {
            HeadPhantom head = head_phantom(seed * 1000003u + static_cast<std::uint64_t>(k) * 1000u + i, size);
            Image img = head.image;
            const double c = (size - 1) / 2.0;
            const double lx = c + rng.uniform(-0.12, 0.12) * size, ly = c + rng.uniform(-0.12, 0.12) * size;
            switch (k) {
                case 0: fill_disk(img, lx, ly, size * rng.uniform(0.08, 0.12), 0.95); break;
                case 1: fill_ring(img, lx, ly, size * 0.05, size * rng.uniform(0.1, 0.13), 0.95); break;
                case 2: break;
                default:
                    fill_rect(img, static_cast<int>(lx) - size / 12, static_cast<int>(ly) - size / 30,
                              static_cast<int>(lx) + size / 12, static_cast<int>(ly) + size / 30, 0.95);
                    break;
            }
            // Multiplicative shading so bias correction has something to do.
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    img.at(x, y) = std::clamp(img.at(x, y) * (0.85 + 0.15 * x / size), 0.0, 1.0);
            char name[64];
            std::snprintf(name, sizeof name, "%s_%03zu.pgm", cls.c_str(), i);
            save_pgm(img, dir / name);
        }
    }
}

}  // namespace mriprep::phantom
