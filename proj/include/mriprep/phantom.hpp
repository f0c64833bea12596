#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "mriprep/image.hpp"
#include "mriprep/train.hpp"

namespace mriprep::phantom {

// Seeded variates built from raw engine bits, so streams are identical across
// standard library implementations.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0);

    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // Box-Muller
    int integer(int lo, int hi);            // [lo, hi]

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Adds N(0, sigma^2) per pixel; values are not clamped.
Image add_gaussian_noise(const Image& image, double sigma, std::uint64_t seed);

void fill_disk(Image& image, double cx, double cy, double radius, double value);
void fill_ring(Image& image, double cx, double cy, double inner, double outer, double value);
void fill_rect(Image& image, int x0, int y0, int x1, int y1, double value);

// Rectangles, a disk and a triangle at intensities {0.2, 0.5, 0.8} on a 0.2
// background; the fixed denoising test image.
Image geometric_phantom(int size = 128);

// Two tissues (0.4 / 0.8 in alternating vertical bands of `band` pixels).
Image two_tissue_phantom(int width, int height, int band = 10);

// log-field 0.3 sin(pi x / W) sin(pi y / H).
Image sine_log_field(int width, int height, double amplitude = 0.3);

struct HeadPhantom {
    Image image;
    Mask brain;  // ground-truth brain disk
    Mask holes;  // pixels punched out of the brain
};

// Bright brain disk inside a thin bright skull annulus on black, with a few
// dark holes punched into the brain.
HeadPhantom head_phantom(std::uint64_t seed, int size = 150);

// Synthetic four-class shape task: filled disk, ring, cross and scattered
// dots on a noisy textured background.
enum class ShapeClass { disk = 0, ring = 1, cross = 2, dots = 3 };

Image shape_image(ShapeClass kind, Rng& rng, int size = 150);

// per_class images of each class, interleaved by class, labels 0..3.
nnet::Dataset shape_dataset(std::size_t per_class, std::uint64_t seed, int size = 150);

// Source task for transfer: filled squares, square outlines, diagonal crosses
// and scattered small squares.
nnet::Dataset source_dataset(std::size_t per_class, std::uint64_t seed, int size = 150);

// Class-structured PGM tree (root/<class>/<class>_NNN.pgm) of head-like scans
// with a class-specific lesion, for exercising the pipeline end to end.
void write_phantom_tree(const std::filesystem::path& root, std::size_t per_class, std::uint64_t seed,
                        int size = 96);

}  // namespace mriprep::phantom
