#include <algorithm>
#include <cmath>
#include <numbers>

#include "mriprep/denoise.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/simd.hpp"

namespace mriprep::denoise {

void Bm3dProfile::validate() const {
    if (block_size != 4 && block_size != 8 && block_size != 16)
        throw ArgumentError("bm3d: block_size must be 4, 8 or 16");
    if (search_window % 2 == 0 || search_window <= block_size)
        throw ArgumentError("bm3d: search_window must be odd and larger than block_size");
    if (max_group_size < 1 || (max_group_size & (max_group_size - 1)) != 0)
        throw ArgumentError("bm3d: max_group_size must be a power of two");
    if (step < 1) throw ArgumentError("bm3d: step must be >= 1");
    if (!(match_threshold_stage1 > 0.0) || !(match_threshold_stage2 > 0.0))
        throw ArgumentError("bm3d: match thresholds must be > 0");
    if (!(hard_threshold_multiplier > 0.0)) throw ArgumentError("bm3d: hard threshold multiplier must be > 0");
}

namespace {

// Every block of the image copied into a contiguous row-major patch so that
// the distance in the matching loop is a single vector kernel call.
class BlockTable {
public:
    BlockTable(const Image& image, int block)
        : block_(block), cols_(image.width() - block + 1), rows_(image.height() - block + 1),
          patch_(static_cast<std::size_t>(block) * block),
          data_(static_cast<std::size_t>(cols_) * rows_ * patch_) {
        for (int y = 0; y < rows_; ++y) {
            for (int x = 0; x < cols_; ++x) {
                double* dst = data_.data() + index(x, y);
                for (int r = 0; r < block; ++r) {
                    const auto src = image.row(y + r).subspan(static_cast<std::size_t>(x), block);
                    std::copy(src.begin(), src.end(), dst + static_cast<std::size_t>(r) * block);
                }
            }
        }
    }

    int cols() const noexcept { return cols_; }
    int rows() const noexcept { return rows_; }
    std::size_t patch_size() const noexcept { return patch_; }

    std::span<const double> block(int x, int y) const { return {data_.data() + index(x, y), patch_}; }

private:
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * cols_ + x) * patch_;
    }

    int block_;
    int cols_;
    int rows_;
    std::size_t patch_;
    std::vector<double> data_;
};

std::vector<BlockMatch> match_blocks(const BlockTable& table, BlockPosition ref, const Bm3dProfile& profile,
                                     double threshold) {
    const int bs = profile.block_size;
    const double scale = 255.0 * 255.0 / (bs * bs);
    const int half = profile.search_window / 2;
    const int x_lo = std::max(0, ref.x - half), x_hi = std::min(table.cols() - 1, ref.x + half);
    const int y_lo = std::max(0, ref.y - half), y_hi = std::min(table.rows() - 1, ref.y + half);

    const auto ref_block = table.block(ref.x, ref.y);
    std::vector<BlockMatch> candidates;
    candidates.reserve(static_cast<std::size_t>(x_hi - x_lo + 1) * (y_hi - y_lo + 1));
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            if (x == ref.x && y == ref.y) continue;
            const double d = simd::squared_distance(ref_block, table.block(x, y)) * scale;
            if (d <= threshold) candidates.push_back({{x, y}, d});
        }
    }
    const auto before = [](const BlockMatch& a, const BlockMatch& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.position.y != b.position.y) return a.position.y < b.position.y;
        return a.position.x < b.position.x;
    };
    const std::size_t keep =
        std::min(candidates.size(), static_cast<std::size_t>(profile.max_group_size) - 1);
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      before);
    std::vector<BlockMatch> out;
    out.reserve(keep + 1);
    out.push_back({ref, 0.0});
    out.insert(out.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep));
    return out;
}

// Orthonormal DCT-II on bs x bs blocks plus orthonormal Haar across the group.
class Transform3d {
public:
    explicit Transform3d(int block) : bs_(block), dct_(static_cast<std::size_t>(block) * block), tmp_(dct_.size()) {
        const double n = block;
        for (int k = 0; k < block; ++k) {
            const double ck = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
            for (int i = 0; i < block; ++i)
                dct_[static_cast<std::size_t>(k) * block + i] =
                    ck * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
        }
    }

    // In place: out = D * B * D^T (forward) or D^T * B * D (inverse).
    void block_forward(double* b) { apply(b, false); }
    void block_inverse(double* b) { apply(b, true); }

    // Haar along the group axis for each of the `stride` coefficients.
    static void haar_forward(std::vector<double>& group, std::size_t count, std::size_t stride) {
        std::vector<double> tmp(count);
        for (std::size_t c = 0; c < stride; ++c) {
            for (std::size_t len = count; len > 1; len /= 2) {
                const std::size_t half = len / 2;
                for (std::size_t i = 0; i < half; ++i) {
                    const double a = group[2 * i * stride + c], b = group[(2 * i + 1) * stride + c];
                    tmp[i] = (a + b) * std::numbers::sqrt2 * 0.5;
                    tmp[half + i] = (a - b) * std::numbers::sqrt2 * 0.5;
                }
                for (std::size_t i = 0; i < len; ++i) group[i * stride + c] = tmp[i];
            }
        }
    }

    static void haar_inverse(std::vector<double>& group, std::size_t count, std::size_t stride) {
        std::vector<double> tmp(count);
        for (std::size_t c = 0; c < stride; ++c) {
            for (std::size_t len = 2; len <= count; len *= 2) {
                const std::size_t half = len / 2;
                for (std::size_t i = 0; i < half; ++i) {
                    const double s = group[i * stride + c], d = group[(half + i) * stride + c];
                    tmp[2 * i] = (s + d) * std::numbers::sqrt2 * 0.5;
                    tmp[2 * i + 1] = (s - d) * std::numbers::sqrt2 * 0.5;
                }
                for (std::size_t i = 0; i < len; ++i) group[i * stride + c] = tmp[i];
            }
        }
    }

private:
    void apply(double* b, bool inverse) {
        const int n = bs_;
        auto d = [&](int row, int col) {
            return inverse ? dct_[static_cast<std::size_t>(col) * n + row] : dct_[static_cast<std::size_t>(row) * n + col];
        };
        // tmp = M * B
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += d(k, i) * b[i * n + j];
                tmp_[static_cast<std::size_t>(k) * n + j] = s;
            }
        // B = tmp * M^T
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += tmp_[static_cast<std::size_t>(k) * n + j] * d(l, j);
                b[k * n + l] = s;
            }
    }

    int bs_;
    std::vector<double> dct_;
    std::vector<double> tmp_;
};

std::vector<int> reference_grid(int extent, int block, int step) {
    std::vector<int> out;
    const int last = extent - block;
    for (int p = 0; p <= last; p += step) out.push_back(p);
    if (out.back() != last) out.push_back(last);
    return out;
}

std::size_t power_of_two_floor(std::size_t n) {
    std::size_t p = 1;
    while (p * 2 <= n) p *= 2;
    return p;
}

class Aggregator {
public:
    Aggregator(int width, int height, int block)
        : width_(width), height_(height), block_(block),
          numerator_(static_cast<std::size_t>(width) * height, 0.0), denominator_(numerator_.size(), 0.0) {}

    void add(BlockPosition at, const double* estimate, double weight) {
        for (int r = 0; r < block_; ++r) {
            const std::size_t base = static_cast<std::size_t>(at.y + r) * width_ + at.x;
            for (int c = 0; c < block_; ++c) {
                numerator_[base + c] += weight * estimate[r * block_ + c];
                denominator_[base + c] += weight;
            }
        }
    }

    Image result() const {
        Image out(width_, height_);
        std::span<double> px = out.pixels();
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = numerator_[i] / denominator_[i];
        return out;
    }

private:
    int width_, height_, block_;
    std::vector<double> numerator_;
    std::vector<double> denominator_;
};

void check_inputs(const Image& noisy, const Bm3dProfile& profile) {
    profile.validate();
    if (!(profile.sigma > 0.0)) throw ArgumentError("bm3d: sigma must be > 0");
    if (noisy.width() < profile.block_size || noisy.height() < profile.block_size)
        throw ArgumentError("bm3d: image is smaller than the block size");
}

Image hard_threshold_stage(const Image& noisy, const BlockTable& table, const Bm3dProfile& profile) {
    const int bs = profile.block_size;
    const std::size_t patch = table.patch_size();
    const double threshold = profile.hard_threshold_multiplier * profile.sigma;
    const double sigma2 = profile.sigma * profile.sigma;
    Transform3d transform(bs);
    Aggregator aggregate(noisy.width(), noisy.height(), bs);
    std::vector<double> group;

    for (int ry : reference_grid(noisy.height(), bs, profile.step)) {
        for (int rx : reference_grid(noisy.width(), bs, profile.step)) {
            auto matches = match_blocks(table, {rx, ry}, profile, profile.match_threshold_stage1);
            const std::size_t count = power_of_two_floor(matches.size());
            group.assign(count * patch, 0.0);
            for (std::size_t g = 0; g < count; ++g) {
                const auto src = table.block(matches[g].position.x, matches[g].position.y);
                std::copy(src.begin(), src.end(), group.begin() + static_cast<std::ptrdiff_t>(g * patch));
                transform.block_forward(group.data() + g * patch);
            }
            Transform3d::haar_forward(group, count, patch);
            // The 3-D DC term (group mean) is always kept.
            std::size_t retained = 1;
            for (std::size_t i = 1; i < group.size(); ++i) {
                if (std::abs(group[i]) < threshold) group[i] = 0.0;
                else ++retained;
            }
            Transform3d::haar_inverse(group, count, patch);
            const double weight = 1.0 / (sigma2 * static_cast<double>(retained));
            for (std::size_t g = 0; g < count; ++g) {
                transform.block_inverse(group.data() + g * patch);
                aggregate.add(matches[g].position, group.data() + g * patch, weight);
            }
        }
    }
    return aggregate.result();
}

Image wiener_stage(const Image& noisy, const Image& basic, const BlockTable& noisy_table, const Bm3dProfile& profile) {
    const int bs = profile.block_size;
    const BlockTable basic_table(basic, bs);
    const std::size_t patch = basic_table.patch_size();
    const double sigma2 = profile.sigma * profile.sigma;
    Transform3d transform(bs);
    Aggregator aggregate(noisy.width(), noisy.height(), bs);
    std::vector<double> noisy_group, basic_group;

    for (int ry : reference_grid(noisy.height(), bs, profile.step)) {
        for (int rx : reference_grid(noisy.width(), bs, profile.step)) {
            auto matches = match_blocks(basic_table, {rx, ry}, profile, profile.match_threshold_stage2);
            const std::size_t count = power_of_two_floor(matches.size());
            noisy_group.assign(count * patch, 0.0);
            basic_group.assign(count * patch, 0.0);
            for (std::size_t g = 0; g < count; ++g) {
                const auto [x, y] = matches[g].position;
                const auto n = noisy_table.block(x, y);
                const auto b = basic_table.block(x, y);
                std::copy(n.begin(), n.end(), noisy_group.begin() + static_cast<std::ptrdiff_t>(g * patch));
                std::copy(b.begin(), b.end(), basic_group.begin() + static_cast<std::ptrdiff_t>(g * patch));
                transform.block_forward(noisy_group.data() + g * patch);
                transform.block_forward(basic_group.data() + g * patch);
            }
            Transform3d::haar_forward(noisy_group, count, patch);
            Transform3d::haar_forward(basic_group, count, patch);
            // Shrink every coefficient except the 3-D DC term.
            double energy = 1.0;
            for (std::size_t i = 1; i < noisy_group.size(); ++i) {
                const double b2 = basic_group[i] * basic_group[i];
                const double w = b2 / (b2 + sigma2);
                noisy_group[i] *= w;
                energy += w * w;
            }
            Transform3d::haar_inverse(noisy_group, count, patch);
            const double weight = 1.0 / (sigma2 * energy);
            for (std::size_t g = 0; g < count; ++g) {
                transform.block_inverse(noisy_group.data() + g * patch);
                aggregate.add(matches[g].position, noisy_group.data() + g * patch, weight);
            }
        }
    }
    return aggregate.result();
}

}  // namespace

std::vector<BlockMatch> block_match(const Image& image, BlockPosition reference, const Bm3dProfile& profile,
                                    double threshold) {
    profile.validate();
    const int bs = profile.block_size;
    if (reference.x < 0 || reference.y < 0 || reference.x + bs > image.width() || reference.y + bs > image.height())
        throw ArgumentError("block_match: reference block is not inside the image");
    // Only the search window is tabulated.
    const int half = profile.search_window / 2;
    const int x0 = std::max(0, reference.x - half), y0 = std::max(0, reference.y - half);
    const int x1 = std::min(image.width(), reference.x + half + bs);
    const int y1 = std::min(image.height(), reference.y + half + bs);
    Image window(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) window.at(x - x0, y - y0) = image.at(x, y);
    const BlockTable table(window, bs);
    auto matches = match_blocks(table, {reference.x - x0, reference.y - y0}, profile, threshold);
    for (auto& m : matches) {
        m.position.x += x0;
        m.position.y += y0;
    }
    return matches;
}

std::vector<BlockMatch> block_match(const Image& image, BlockPosition reference, const Bm3dProfile& profile) {
    return block_match(image, reference, profile, profile.match_threshold_stage1);
}

Image bm3d_basic_estimate(const Image& noisy, const Bm3dProfile& profile) {
    check_inputs(noisy, profile);
    const BlockTable table(noisy, profile.block_size);
    return hard_threshold_stage(noisy, table, profile);
}

Image bm3d(const Image& noisy, const Bm3dProfile& profile) {
    check_inputs(noisy, profile);
    const BlockTable table(noisy, profile.block_size);
    const Image basic = hard_threshold_stage(noisy, table, profile);
    return wiener_stage(noisy, basic, table, profile);
}

}  // namespace mriprep::denoise
