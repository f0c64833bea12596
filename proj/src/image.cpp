#include "mriprep/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

#include "mriprep/errors.hpp"
#include "mriprep/simd.hpp"

namespace mriprep {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw ArgumentError("image dimensions must be >= 1");
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width < 1 || height < 1) throw ArgumentError("image dimensions must be >= 1");
    if (pixels_.size() != static_cast<std::size_t>(width) * height)
        throw ArgumentError("pixel count does not match width * height");
}

Mask::Mask(int width, int height, bool fill) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw ArgumentError("mask dimensions must be >= 1");
    bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::uint64_t Histogram::total() const noexcept {
    return std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// PGM / PPM

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::istream& in) : in_(in) {}

    // Next whitespace-delimited token, skipping '#' comments.
    std::string token() {
        std::string out;
        int ch = in_.get();
        for (;;) {
            if (ch == EOF) break;
            if (ch == '#') {
                while (ch != EOF && ch != '\n' && ch != '\r') ch = in_.get();
                continue;
            }
            if (!std::isspace(ch)) break;
            ch = in_.get();
        }
        while (ch != EOF && !std::isspace(ch) && ch != '#') {
            out.push_back(static_cast<char>(ch));
            ch = in_.get();
        }
        if (ch == '#') in_.unget();
        last_ = ch;
        return out;
    }

    int number(const char* what) {
        const std::string t = token();
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
            t.size() > 9)
            throw LoadError(LoadError::Kind::malformed_header, std::string("pgm: bad ") + what);
        return std::stoi(t);
    }

    // The byte that terminated the last token; must be a single whitespace
    // character before the raster.
    int last() const noexcept { return last_; }

private:
    std::istream& in_;
    int last_ = 0;
};

}  // namespace

Image load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    HeaderReader header(in);
    const std::string magic = header.token();
    int channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw LoadError(LoadError::Kind::unsupported_magic,
                        "unsupported raster magic '" + magic + "' in " + path.string());
    }
    const int width = header.number("width");
    const int height = header.number("height");
    const int maxval = header.number("maxval");
    if (width < 1 || height < 1) throw LoadError(LoadError::Kind::malformed_header, "pgm: zero dimension");
    if (maxval < 1 || maxval > 65535) throw LoadError(LoadError::Kind::malformed_header, "pgm: maxval out of range");
    if (!std::isspace(header.last())) throw LoadError(LoadError::Kind::malformed_header, "pgm: header not terminated");

    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    const std::size_t samples = static_cast<std::size_t>(width) * height * channels;
    std::vector<unsigned char> raw(samples * bytes_per_sample);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw LoadError(LoadError::Kind::truncated_payload,
                        "pgm: expected " + std::to_string(raw.size()) + " payload bytes, got " +
                            std::to_string(in.gcount()) + " in " + path.string());

    const double scale = 1.0 / maxval;
    auto sample = [&](std::size_t i) -> double {
        const unsigned v = bytes_per_sample == 2 ? (raw[2 * i] << 8u) | raw[2 * i + 1] : raw[i];
        return std::min(static_cast<double>(v), static_cast<double>(maxval)) * scale;
    };

    std::vector<double> pixels(static_cast<std::size_t>(width) * height);
    if (channels == 1) {
        for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = sample(i);
    } else {
        for (std::size_t i = 0; i < pixels.size(); ++i)
            pixels[i] = 0.299 * sample(3 * i) + 0.587 * sample(3 * i + 1) + 0.114 * sample(3 * i + 2);
    }
    return Image(width, height, std::move(pixels));
}

void save_pgm(const Image& image, const std::filesystem::path& path, int depth) {
    if (depth != 8 && depth != 16) throw ArgumentError("pgm depth must be 8 or 16");
    if (image.empty()) throw ArgumentError("cannot save an empty image");
    for (double v : image.pixels()) {
        if (!(v >= 0.0 && v <= 1.0)) throw RangeError("pgm: intensity outside [0, 1]: " + std::to_string(v));
    }
    const int maxval = depth == 8 ? 255 : 65535;
    std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n" +
                      std::to_string(maxval) + "\n";
    const std::size_t header = out.size();
    out.resize(header + image.size() * (depth / 8));
    std::size_t pos = header;
    for (double v : image.pixels()) {
        const auto q = static_cast<unsigned>(std::lround(v * maxval));
        if (depth == 16) out[pos++] = static_cast<char>((q >> 8) & 0xff);
        out[pos++] = static_cast<char>(q & 0xff);
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling

int reflect_index(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * n;
    int r = i % period;
    if (r < 0) r += period;
    return r < n ? r : period - 1 - r;
}

double sample_bilinear(const Image& image, double x, double y, Border border, double fill) {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const double fx = x - fx0, fy = y - fy0;
    const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
    const int w = image.width(), h = image.height();

    auto tap = [&](int xi, int yi) -> double {
        if (xi >= 0 && xi < w && yi >= 0 && yi < h) return image.at(xi, yi);
        if (border == Border::zero) return fill;
        return image.at(reflect_index(xi, w), reflect_index(yi, h));
    };

    double value = 0.0;
    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};
    for (int j = 0; j < 2; ++j) {
        if (wy[j] == 0.0) continue;
        for (int i = 0; i < 2; ++i) {
            if (wx[i] == 0.0) continue;
            value += wy[j] * wx[i] * tap(x0 + i, y0 + j);
        }
    }
    return value;
}

Image resize_bilinear(const Image& image, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) throw ArgumentError("resize target must be >= 1 in both axes");
    if (image.empty()) throw ArgumentError("cannot resize an empty image");
    if (out_width == image.width() && out_height == image.height()) return image;

    auto source_coord = [](int i, int in, int out) {
        if (out == 1) return 0.5 * (in - 1);
        return static_cast<double>(i) * (in - 1) / (out - 1);
    };

    Image out(out_width, out_height);
    for (int y = 0; y < out_height; ++y) {
        const double sy = source_coord(y, image.height(), out_height);
        for (int x = 0; x < out_width; ++x) {
            const double sx = source_coord(x, image.width(), out_width);
            out.at(x, y) = sample_bilinear(image, sx, sy, Border::reflect);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution

Image convolve2d(const Image& image, const Kernel2d& kernel, Border border) {
    if (kernel.width % 2 == 0 || kernel.height % 2 == 0 || kernel.width < 1 || kernel.height < 1)
        throw ArgumentError("convolve2d: kernel dimensions must be odd");
    if (kernel.weights.size() != static_cast<std::size_t>(kernel.width) * kernel.height)
        throw ArgumentError("convolve2d: kernel weight count does not match its dimensions");
    if (image.empty()) throw ArgumentError("convolve2d: empty image");

    const int rx = kernel.width / 2, ry = kernel.height / 2;
    const int w = image.width(), h = image.height();
    const int pw = w + 2 * rx, ph = h + 2 * ry;

    // Padded copy so the inner loop is a plain shifted axpy per tap.
    std::vector<double> padded(static_cast<std::size_t>(pw) * ph, 0.0);
    for (int py = 0; py < ph; ++py) {
        const int sy = py - ry;
        for (int px = 0; px < pw; ++px) {
            const int sx = px - rx;
            double v = 0.0;
            if (sx >= 0 && sx < w && sy >= 0 && sy < h) {
                v = image.at(sx, sy);
            } else if (border == Border::reflect) {
                v = image.at(reflect_index(sx, w), reflect_index(sy, h));
            }
            padded[static_cast<std::size_t>(py) * pw + px] = v;
        }
    }

    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        std::span<double> dst = out.row(y);
        for (int ky = 0; ky < kernel.height; ++ky) {
            const double* src_row = padded.data() + static_cast<std::size_t>(y + ky) * pw;
            for (int kx = 0; kx < kernel.width; ++kx) {
                const double weight = kernel.weights[static_cast<std::size_t>(ky) * kernel.width + kx];
                if (weight == 0.0) continue;
                simd::axpy(weight, std::span<const double>(src_row + kx, static_cast<std::size_t>(w)), dst);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

Histogram histogram256(const Image& image) {
    Histogram hist;
    for (double v : image.pixels()) {
        if (!(v >= 0.0 && v <= 1.0)) throw RangeError("histogram256: intensity outside [0, 1]");
        hist.bins[static_cast<std::size_t>(std::lround(v * 255.0))] += 1;
    }
    return hist;
}

double psnr(const Image& reference, const Image& test) {
    if (!reference.same_shape(test)) throw ArgumentError("psnr: dimension mismatch");
    if (reference.empty()) throw ArgumentError("psnr: empty images");
    const double sse = simd::squared_distance(reference.pixels(), test.pixels());
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(reference.size());
    return 10.0 * std::log10(1.0 / mse);
}

double mean(const Image& image) {
    if (image.empty()) throw ArgumentError("mean of an empty image");
    double sum = 0.0;
    for (double v : image.pixels()) sum += v;
    return sum / static_cast<double>(image.size());
}

void require_finite(const Image& image, const char* context) {
    for (double v : image.pixels()) {
        if (!std::isfinite(v)) throw NumericError(std::string(context) + ": non-finite intensity");
    }
}

}  // namespace mriprep
