#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mriprep {

// 2-D grayscale raster, row-major, nominal intensity range [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, double fill = 0.0);
    Image(int width, int height, std::vector<double> pixels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    double& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<double> row(int y) { return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
    std::span<const double> row(int y) const { return {pixels_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }

    std::span<double> pixels() noexcept { return pixels_; }
    std::span<const double> pixels() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> pixels_;
};

// Binary raster aligned to an Image.
class Mask {
public:
    Mask() = default;
    Mask(int width, int height, bool fill = false);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool value) { bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }

    bool matches(const Image& image) const noexcept {
        return width_ == image.width() && height_ == image.height();
    }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::span<std::uint8_t> bits() noexcept { return bits_; }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

struct Histogram {
    std::array<std::uint64_t, 256> bins{};

    std::uint64_t total() const noexcept;
};

enum class Border { reflect, zero };

// Odd-sized 2-D weights, row-major.
struct Kernel2d {
    int width = 1;
    int height = 1;
    std::vector<double> weights{1.0};
};

// Binary PGM (P5), 8- or 16-bit. Intensities are scaled by maxval.
// Binary PPM (P6) is also accepted and converted with Rec.601 luma weights.
Image load_pgm(const std::filesystem::path& path);
void save_pgm(const Image& image, const std::filesystem::path& path, int depth = 8);

// Corner-aligned bilinear: output pixel i samples input i * (in - 1) / (out - 1).
Image resize_bilinear(const Image& image, int out_width, int out_height);

// Same-size cross-correlation with the given border policy.
Image convolve2d(const Image& image, const Kernel2d& kernel, Border border);

// Bin b counts pixels with round(v * 255) == b.
Histogram histogram256(const Image& image);

// 10 log10(1 / MSE); +infinity when the images are identical.
double psnr(const Image& reference, const Image& test);

// Mean intensity. Convenience used throughout the tests and pipeline.
double mean(const Image& image);

// Index into [0, n) for position i under half-sample symmetric reflection
// (abcd -> dcba|abcd|dcba), valid for any integer i.
int reflect_index(int i, int n) noexcept;

// Sampled intensity at a real-valued position with bilinear weights; taps
// outside the frame read `fill` (zero border) or the reflected pixel.
double sample_bilinear(const Image& image, double x, double y, Border border, double fill = 0.0);

// Throws NumericError when any pixel is NaN or infinite.
void require_finite(const Image& image, const char* context);

}  // namespace mriprep
