#include <algorithm>
#include <cmath>
#include <numeric>

#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::nnet {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void reshape_buffer(Tensor& t, const Shape& shape, bool zero) {
    t.shape = shape;
    t.data.resize(shape_size(shape));
    if (zero) std::fill(t.data.begin(), t.data.end(), 0.0);
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape))
        throw ArgumentError("tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
}

std::size_t Tensor::stride0() const noexcept {
    if (shape.empty()) return 0;
    return shape[0] == 0 ? 0 : data.size() / shape[0];
}

void require_finite(const Tensor& t, const char* context) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw NumericError(std::string(context) + ": non-finite value");
}

Tensor softmax(const Tensor& logits) {
    if (logits.shape.size() != 2) throw ArgumentError("softmax: expected [N, K] logits");
    require_finite(logits, "softmax");
    Tensor out(logits.shape);
    const std::size_t k = logits.dim(1);
    for (std::size_t n = 0; n < logits.dim(0); ++n) {
        const double* z = logits.data.data() + n * k;
        double* p = out.data.data() + n * k;
        const double peak = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += p[j] = std::exp(z[j] - peak);
        for (std::size_t j = 0; j < k; ++j) p[j] /= total;
    }
    return out;
}

namespace {

void check_targets(const Tensor& probs, const Tensor& onehot) {
    if (probs.shape.size() != 2 || probs.shape != onehot.shape)
        throw ArgumentError("cce: probabilities " + shape_string(probs.shape) + " vs targets " +
                            shape_string(onehot.shape));
    const std::size_t k = onehot.dim(1);
    for (std::size_t n = 0; n < onehot.dim(0); ++n) {
        int ones = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double y = onehot.data[n * k + j];
            if (y == 1.0) {
                ++ones;
            } else if (y != 0.0) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) throw ArgumentError("cce: target row " + std::to_string(n) + " is not one-hot");
    }
}

}  // namespace

double cce_loss(const Tensor& probs, const Tensor& onehot) {
    check_targets(probs, onehot);
    const std::size_t rows = probs.dim(0), k = probs.dim(1);
    if (rows == 0) throw ArgumentError("cce: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < rows * k; ++i)
        if (onehot.data[i] == 1.0) total -= std::log(std::max(probs.data[i], 1e-12));
    return total / static_cast<double>(rows);
}

Tensor softmax_cce_grad(const Tensor& probs, const Tensor& onehot) {
    check_targets(probs, onehot);
    Tensor grad(probs.shape);
    const double scale = 1.0 / static_cast<double>(probs.dim(0));
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] = (probs.data[i] - onehot.data[i]) * scale;
    return grad;
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
    Tensor out({labels.size(), classes});
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes)
            throw ArgumentError("one_hot: label " + std::to_string(labels[n]) + " out of range");
        out.data[n * classes + static_cast<std::size_t>(labels[n])] = 1.0;
    }
    return out;
}

}  // namespace mriprep::nnet
