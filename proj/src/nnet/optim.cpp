#include <algorithm>
#include <cmath>
#include <limits>

#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::nnet {

void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, const AdamHyper& hyper) {
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw ArgumentError("adam: parameter, gradient and moment sizes differ");
    if (t == 0) throw ArgumentError("adam: timestep must be >= 1");
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
}

Adam::Adam(const std::vector<Parameter*>& params, AdamHyper hyper) : params_(params), hyper_(hyper) {
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (p.frozen) continue;
        if (p.grad.size() != p.value.size()) throw ArgumentError("adam: gradient shape mismatch for " + p.name);
        adam_update(p.value.data, p.grad.data, m_[i], v_[i], t_, lr, hyper_);
    }
}

PlateauScheduler::PlateauScheduler(double initial_lr, int patience, double factor, double min_lr)
    : lr_(initial_lr),
      patience_(patience),
      factor_(factor),
      min_lr_(min_lr),
      best_(std::numeric_limits<double>::infinity()) {
    if (!(initial_lr > 0.0)) throw ArgumentError("plateau: learning rate must be > 0");
    if (patience < 1) throw ArgumentError("plateau: patience must be >= 1");
    if (!(factor > 0.0 && factor < 1.0)) throw ArgumentError("plateau: factor must be in (0, 1)");
    if (!(min_lr >= 0.0)) throw ArgumentError("plateau: min_lr must be >= 0");
}

double PlateauScheduler::observe(double value) {
    if (value < best_) {
        best_ = value;
        wait_ = 0;
        return lr_;
    }
    if (++wait_ >= patience_) {
        lr_ = std::max(lr_ * factor_, min_lr_);
        wait_ = 0;
    }
    return lr_;
}

std::vector<double> reduce_lr_on_plateau(std::span<const double> history, double initial_lr, int patience,
                                         double factor, double min_lr) {
    PlateauScheduler s(initial_lr, patience, factor, min_lr);
    std::vector<double> out;
    out.reserve(history.size());
    for (double v : history) out.push_back(s.observe(v));
    return out;
}

}  // namespace mriprep::nnet
