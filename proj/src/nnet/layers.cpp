#include <algorithm>
#include <cmath>
#include <random>

#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"
#include "mriprep/simd.hpp"

namespace mriprep::nnet {

bool Layer::has_trainable() {
    for (Parameter* p : parameters())
        if (!p->frozen) return true;
    return false;
}

namespace {

Parameter make_parameter(std::string name, Shape shape, double fill = 0.0) {
    Parameter p;
    p.name = std::move(name);
    p.value = Tensor(shape, fill);
    p.grad = Tensor(std::move(shape));
    return p;
}

void require_rank(const Tensor& x, std::size_t rank, const char* layer) {
    if (x.shape.size() != rank)
        throw ArgumentError(std::string(layer) + ": expected rank " + std::to_string(rank) + " input, got " +
                            shape_string(x.shape));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t pad)
    : weight(make_parameter("weight", {out_channels, in_channels, kernel, kernel})),
      bias(make_parameter("bias", {out_channels})),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad) {
    if (in_ == 0 || out_ == 0 || k_ == 0 || stride_ == 0) throw ArgumentError("conv2d: zero-sized configuration");
}

Shape Conv2d::output_shape(const Shape& input) const {
    if (input.size() != 3 || input[0] != in_)
        throw ArgumentError("conv2d: expected [" + std::to_string(in_) + ", H, W] input, got " + shape_string(input));
    if (input[1] + 2 * pad_ < k_ || input[2] + 2 * pad_ < k_) throw ArgumentError("conv2d: input smaller than kernel");
    return {out_, (input[1] + 2 * pad_ - k_) / stride_ + 1, (input[2] + 2 * pad_ - k_) / stride_ + 1};
}

namespace {

struct ConvGeometry {
    std::size_t channels, h, w, k, stride, pad, oh, ow;
};

// Output columns [lo, hi) whose input column ox + kx - pad lies inside [0, w)
// (stride 1).
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
    const long lo = std::max(0L, static_cast<long>(g.pad) - static_cast<long>(kx));
    const long hi = std::min(static_cast<long>(g.ow), static_cast<long>(g.w + g.pad) - static_cast<long>(kx));
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

// col[(c * k + ky) * k + kx][oy * ow + ox] = x[c][oy * s + ky - pad][ox * s + kx - pad], 0 outside.
void im2col(const double* x, const ConvGeometry& g, double* col) {
    const std::size_t plane = g.oh * g.ow;
    if (g.stride == 1) {
        for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t ky = 0; ky < g.k; ++ky)
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    double* row = col + ((c * g.k + ky) * g.k + kx) * plane;
                    const auto [lo, hi] = valid_columns(g, kx);
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        double* dst = row + oy * g.ow;
                        const long iy = static_cast<long>(oy + ky) - static_cast<long>(g.pad);
                        if (iy < 0 || iy >= static_cast<long>(g.h)) {
                            std::fill_n(dst, g.ow, 0.0);
                            continue;
                        }
                        const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w + kx - g.pad;
                        std::fill(dst, dst + lo, 0.0);
                        std::copy(src + lo, src + hi, dst + lo);
                        std::fill(dst + hi, dst + g.ow, 0.0);
                    }
                }
        return;
    }
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = col + ((c * g.k + ky) * g.k + kx) * plane;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    double* dst = row + oy * g.ow;
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill_n(dst, g.ow, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
                    }
                }
            }
}

// Adjoint of im2col: dx += scatter(dcol).
void col2im(const double* dcol, const ConvGeometry& g, double* dx) {
    const std::size_t plane = g.oh * g.ow;
    if (g.stride == 1) {
        for (std::size_t c = 0; c < g.channels; ++c)
            for (std::size_t ky = 0; ky < g.k; ++ky)
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    const double* row = dcol + ((c * g.k + ky) * g.k + kx) * plane;
                    const auto [lo, hi] = valid_columns(g, kx);
                    for (std::size_t oy = 0; oy < g.oh; ++oy) {
                        const long iy = static_cast<long>(oy + ky) - static_cast<long>(g.pad);
                        if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                        double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w + kx - g.pad;
                        const double* src = row + oy * g.ow;
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    }
                }
        return;
    }
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = dcol + ((c * g.k + ky) * g.k + kx) * plane;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const double* src = row + oy * g.ow;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace

const Tensor& Conv2d::forward(const Tensor& x, Mode) {
    require_rank(x, 4, "conv2d");
    const Shape out_shape = output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const ConvGeometry g{in_, x.dim(2), x.dim(3), k_, stride_, pad_, out_shape[1], out_shape[2]};
    const std::size_t batch = x.dim(0), depth = in_ * k_ * k_, plane = g.oh * g.ow;
    Tensor& y = output_;
    reshape_buffer(y, {batch, out_, g.oh, g.ow});
    col_.resize(depth * plane);
    for (std::size_t n = 0; n < batch; ++n) {
        im2col(x.data.data() + n * x.stride0(), g, col_.data());
        double* yn = y.data.data() + n * y.stride0();
        simd::gemm_nn({weight.value.data.data(), out_, depth, depth}, {col_.data(), depth, plane, plane},
                      {yn, out_, plane, plane}, false);
        for (std::size_t o = 0; o < out_; ++o) {
            const double b = bias.value.data[o];
            if (b != 0.0)
                for (std::size_t i = 0; i < plane; ++i) yn[o * plane + i] += b;
        }
    }
    input_ = &x;
    return y;
}

const Tensor& Conv2d::backward(const Tensor& dy, bool need_input_grad) {
    if (!input_) throw ArgumentError("conv2d: backward without forward");
    const Tensor& x = *input_;
    const ConvGeometry g{in_, x.dim(2), x.dim(3), k_, stride_, pad_, dy.dim(2), dy.dim(3)};
    const std::size_t batch = x.dim(0), depth = in_ * k_ * k_, plane = g.oh * g.ow;
    if (dy.shape != Shape{batch, out_, g.oh, g.ow}) throw ArgumentError("conv2d: gradient shape mismatch");
    Tensor& dx = grad_;
    if (need_input_grad) {
        reshape_buffer(dx, x.shape, true);
        dcol_.resize(depth * plane);
    } else {
        dx = Tensor();
    }
    col_.resize(depth * plane);
    for (std::size_t n = 0; n < batch; ++n) {
        const double* dyn = dy.data.data() + n * dy.stride0();
        im2col(x.data.data() + n * x.stride0(), g, col_.data());
        simd::gemm_nt({dyn, out_, plane, plane}, {col_.data(), depth, plane, plane},
                      {weight.grad.data.data(), out_, depth, depth}, true);
        for (std::size_t o = 0; o < out_; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += dyn[o * plane + i];
            bias.grad.data[o] += s;
        }
        if (need_input_grad) {
            simd::gemm_tn({weight.value.data.data(), out_, depth, depth}, {dyn, out_, plane, plane},
                          {dcol_.data(), depth, plane, plane}, false);
            col2im(dcol_.data(), g, dx.data.data() + n * dx.stride0());
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : gamma(make_parameter("gamma", {channels}, 1.0)),
      beta(make_parameter("beta", {channels})),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("batchnorm: momentum must be in [0, 1)");
    if (!(eps > 0.0)) throw ArgumentError("batchnorm: eps must be > 0");
}

std::vector<std::pair<std::string, Tensor*>> BatchNorm2d::buffers() {
    return {{"running_mean", &running_mean}, {"running_var", &running_var}};
}

const Tensor& BatchNorm2d::forward(const Tensor& x, Mode mode) {
    require_rank(x, 4, "batchnorm");
    if (x.dim(1) != channels_) throw ArgumentError("batchnorm: channel count mismatch");
    const std::size_t batch = x.dim(0), plane = x.dim(2) * x.dim(3);
    const bool batch_stats = mode == Mode::train && !(gamma.frozen && beta.frozen);
    if (batch_stats && batch < 2) throw ArgumentError("batchnorm: training needs a batch of at least 2");

    Tensor& y = output_;
    reshape_buffer(y, x.shape);
    inv_std_.assign(channels_, 0.0);
    mean_.assign(channels_, 0.0);
    const double count = static_cast<double>(batch * plane);
    for (std::size_t c = 0; c < channels_; ++c) {
        double mean = 0.0, var = 0.0;
        if (batch_stats) {
            for (std::size_t n = 0; n < batch; ++n) {
                const double* p = x.data.data() + (n * channels_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) mean += p[i];
            }
            mean /= count;
            for (std::size_t n = 0; n < batch; ++n) {
                const double* p = x.data.data() + (n * channels_ + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
            }
            var /= count;
            running_mean.data[c] = momentum_ * running_mean.data[c] + (1.0 - momentum_) * mean;
            const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
            running_var.data[c] = momentum_ * running_var.data[c] + (1.0 - momentum_) * unbiased;
        } else {
            mean = running_mean.data[c];
            var = running_var.data[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = inv;
        mean_[c] = mean;
        const double g = gamma.value.data[c], b = beta.value.data[c];
        for (std::size_t n = 0; n < batch; ++n) {
            const double* src = x.data.data() + (n * channels_ + c) * plane;
            double* dst = y.data.data() + (n * channels_ + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = g * ((src[i] - mean) * inv) + b;
        }
    }
    used_batch_stats_ = batch_stats;
    input_ = &x;
    return y;
}

const Tensor& BatchNorm2d::backward(const Tensor& dy, bool need_input_grad) {
    if (!input_) throw ArgumentError("batchnorm: backward without forward");
    const Tensor& x = *input_;
    if (dy.shape != x.shape) throw ArgumentError("batchnorm: gradient shape mismatch");
    const std::size_t batch = dy.dim(0), plane = dy.dim(2) * dy.dim(3);
    const double count = static_cast<double>(batch * plane);
    Tensor& dx = grad_;
    if (need_input_grad) {
        reshape_buffer(dx, dy.shape);
    } else {
        dx = Tensor();
    }
    for (std::size_t c = 0; c < channels_; ++c) {
        // x_hat is recomputed from the retained input rather than stored.
        const double mean = mean_[c], inv = inv_std_[c];
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels_ + c) * plane;
            const double* g = dy.data.data() + off;
            const double* src = x.data.data() + off;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += g[i];
                sum_dy_xh += g[i] * ((src[i] - mean) * inv);
            }
        }
        gamma.grad.data[c] += sum_dy_xh;
        beta.grad.data[c] += sum_dy;
        if (!need_input_grad) continue;
        // Batch statistics: dx = a * (dy - sum_dy / count - x_hat * sum_dy_xh / count)
        // with a = gamma * inv_std. Running statistics are constants: dx = a * dy.
        const double a = gamma.value.data[c] * inv;
        const double shift = used_batch_stats_ ? sum_dy / count : 0.0;
        const double slope = used_batch_stats_ ? sum_dy_xh / count : 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels_ + c) * plane;
            const double* g = dy.data.data() + off;
            const double* src = x.data.data() + off;
            double* dst = dx.data.data() + off;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = a * (g[i] - shift - ((src[i] - mean) * inv) * slope);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU

const Tensor& ReLU::forward(const Tensor& x, Mode) {
    reshape_buffer(output_, x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) output_.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return output_;
}

const Tensor& ReLU::backward(const Tensor& dy, bool need_input_grad) {
    if (!need_input_grad) return grad_ = Tensor();
    if (dy.shape != output_.shape) throw ArgumentError("relu: gradient shape mismatch");
    reshape_buffer(grad_, dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) grad_.data[i] = output_.data[i] > 0.0 ? dy.data[i] : 0.0;
    return grad_;
}

// ---------------------------------------------------------------------------
// MaxPool2d

MaxPool2d::MaxPool2d(std::size_t window) : window_(window) {
    if (window_ == 0) throw ArgumentError("maxpool: window must be >= 1");
}

Shape MaxPool2d::output_shape(const Shape& input) const {
    if (input.size() != 3) throw ArgumentError("maxpool: expected [C, H, W], got " + shape_string(input));
    if (input[1] < window_ || input[2] < window_) throw ArgumentError("maxpool: input smaller than window");
    return {input[0], input[1] / window_, input[2] / window_};
}

const Tensor& MaxPool2d::forward(const Tensor& x, Mode) {
    require_rank(x, 4, "maxpool");
    const Shape os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = os[1], ow = os[2];
    Tensor& y = output_;
    reshape_buffer(y, {x.dim(0), os[0], oh, ow});
    argmax_.resize(y.size());
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = x.data.data() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                // First maximum in raster order within the window.
                std::size_t best = (oy * window_) * w + ox * window_;
                for (std::size_t dy = 0; dy < window_; ++dy)
                    for (std::size_t dx = 0; dx < window_; ++dx) {
                        const std::size_t i = (oy * window_ + dy) * w + ox * window_ + dx;
                        if (src[i] > src[best]) best = i;
                    }
                const std::size_t o = (p * oh + oy) * ow + ox;
                y.data[o] = src[best];
                argmax_[o] = static_cast<std::uint32_t>(p * h * w + best);
            }
    }
    input_shape_ = x.shape;
    return y;
}

const Tensor& MaxPool2d::backward(const Tensor& dy, bool need_input_grad) {
    if (!need_input_grad) return grad_ = Tensor();
    if (dy.size() != argmax_.size()) throw ArgumentError("maxpool: gradient shape mismatch");
    const std::size_t h = input_shape_.at(2), w = input_shape_.at(3);
    const std::size_t oh = h / window_, ow = w / window_;
    const bool covered = oh * window_ == h && ow * window_ == w;
    // Windows tile the input exactly when sizes divide, so every element is
    // written once; otherwise the dropped border must be zeroed first.
    reshape_buffer(grad_, input_shape_, !covered);
    const std::size_t planes = input_shape_[0] * input_shape_[1];
    for (std::size_t p = 0; p < planes; ++p) {
        double* dst = grad_.data.data() + p * h * w;
        if (window_ == 2) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                double* r0 = dst + 2 * oy * w;
                double* r1 = r0 + w;
                const std::size_t base = p * h * w + 2 * oy * w;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::size_t o = (p * oh + oy) * ow + ox;
                    const std::size_t hit = argmax_[o] - base - 2 * ox;  // 0, 1, w or w + 1
                    const double g = dy.data[o];
                    r0[2 * ox] = hit == 0 ? g : 0.0;
                    r0[2 * ox + 1] = hit == 1 ? g : 0.0;
                    r1[2 * ox] = hit == w ? g : 0.0;
                    r1[2 * ox + 1] = hit == w + 1 ? g : 0.0;
                }
            }
            continue;
        }
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t o = (p * oh + oy) * ow + ox;
                const std::size_t hit = argmax_[o] - p * h * w;
                for (std::size_t dy2 = 0; dy2 < window_; ++dy2)
                    for (std::size_t dx2 = 0; dx2 < window_; ++dx2) {
                        const std::size_t i = (oy * window_ + dy2) * w + ox * window_ + dx2;
                        dst[i] = i == hit ? dy.data[o] : 0.0;
                    }
            }
    }
    return grad_;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Shape GlobalAvgPool::output_shape(const Shape& input) const {
    if (input.size() != 3 || input[1] == 0 || input[2] == 0)
        throw ArgumentError("gap: expected non-empty [C, H, W], got " + shape_string(input));
    return {input[0]};
}

const Tensor& GlobalAvgPool::forward(const Tensor& x, Mode) {
    require_rank(x, 4, "gap");
    output_shape({x.dim(1), x.dim(2), x.dim(3)});
    const std::size_t planes = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor& y = output_;
    reshape_buffer(y, {x.dim(0), x.dim(1)});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = x.data.data() + p * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += src[i];
        y.data[p] = s / static_cast<double>(plane);
    }
    input_shape_ = x.shape;
    return y;
}

const Tensor& GlobalAvgPool::backward(const Tensor& dy, bool need_input_grad) {
    if (!need_input_grad) return grad_ = Tensor();
    const std::size_t plane = input_shape_.at(2) * input_shape_.at(3);
    if (dy.size() != input_shape_[0] * input_shape_[1]) throw ArgumentError("gap: gradient shape mismatch");
    Tensor& dx = grad_;
    reshape_buffer(dx, input_shape_);
    for (std::size_t p = 0; p < dy.size(); ++p) {
        const double g = dy.data[p] / static_cast<double>(plane);
        std::fill_n(dx.data.data() + p * plane, plane, g);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(double rate, std::uint64_t seed) : rate_(rate), seed_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout: rate must be in [0, 1)");
}

const Tensor& Dropout::forward(const Tensor& x, Mode mode) {
    if (mode == Mode::infer) {
        scale_.clear();
        output_ = x;
        return output_;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32)};
    std::mt19937_64 engine(seq);
    ++draw_;
    const double keep = 1.0 / (1.0 - rate_);
    scale_.resize(x.size());
    Tensor& y = output_;
    reshape_buffer(y, x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        scale_[i] = u < rate_ ? 0.0 : keep;
        y.data[i] = x.data[i] * scale_[i];
    }
    return y;
}

const Tensor& Dropout::backward(const Tensor& dy, bool need_input_grad) {
    if (!need_input_grad) return grad_ = Tensor();
    if (scale_.empty()) return grad_ = dy;
    if (dy.size() != scale_.size()) throw ArgumentError("dropout: gradient shape mismatch");
    reshape_buffer(grad_, dy.shape);
    for (std::size_t i = 0; i < dy.size(); ++i) grad_.data[i] = dy.data[i] * scale_[i];
    return grad_;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t in_features, std::size_t out_features)
    : weight(make_parameter("weight", {out_features, in_features})),
      bias(make_parameter("bias", {out_features})),
      in_(in_features),
      out_(out_features) {
    if (in_ == 0 || out_ == 0) throw ArgumentError("dense: zero-sized configuration");
}

Shape Dense::output_shape(const Shape& input) const {
    if (input.size() != 1 || input[0] != in_)
        throw ArgumentError("dense: expected [" + std::to_string(in_) + "] input, got " + shape_string(input));
    return {out_};
}

const Tensor& Dense::forward(const Tensor& x, Mode) {
    require_rank(x, 2, "dense");
    output_shape({x.dim(1)});
    const std::size_t batch = x.dim(0);
    Tensor& y = output_;
    reshape_buffer(y, {batch, out_});
    simd::gemm_nt({x.data.data(), batch, in_, in_}, {weight.value.data.data(), out_, in_, in_},
                  {y.data.data(), batch, out_, out_}, false);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out_; ++o) y.data[n * out_ + o] += bias.value.data[o];
    input_ = &x;
    return y;
}

const Tensor& Dense::backward(const Tensor& dy, bool need_input_grad) {
    if (!input_) throw ArgumentError("dense: backward without forward");
    const Tensor& x = *input_;
    const std::size_t batch = x.dim(0);
    if (dy.shape != Shape{batch, out_}) throw ArgumentError("dense: gradient shape mismatch");
    simd::gemm_tn({dy.data.data(), batch, out_, out_}, {x.data.data(), batch, in_, in_},
                  {weight.grad.data.data(), out_, in_, in_}, true);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out_; ++o) bias.grad.data[o] += dy.data[n * out_ + o];
    if (!need_input_grad) return grad_ = Tensor();
    reshape_buffer(grad_, {batch, in_});
    simd::gemm_nn({dy.data.data(), batch, out_, out_}, {weight.value.data.data(), out_, in_, in_},
                  {grad_.data.data(), batch, in_, in_}, false);
    return grad_;
}

}  // namespace mriprep::nnet
