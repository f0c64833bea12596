#include "mriprep/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "mriprep/errors.hpp"
#include "mriprep/log.hpp"

namespace mriprep::nnet {

void Dataset::add(const Image& image, int label) {
    if (empty() && height_ == 0 && width_ == 0) {
        height_ = static_cast<std::size_t>(image.height());
        width_ = static_cast<std::size_t>(image.width());
    }
    if (static_cast<std::size_t>(image.height()) != height_ || static_cast<std::size_t>(image.width()) != width_)
        throw ArgumentError("dataset: image is " + std::to_string(image.width()) + "x" +
                            std::to_string(image.height()) + ", expected " + std::to_string(width_) + "x" +
                            std::to_string(height_));
    const auto px = image.pixels();
    pixels_.insert(pixels_.end(), px.begin(), px.end());
    labels_.push_back(label);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    Tensor t({indices.size(), 1, height_, width_});
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(sample(indices[i]), sample_size(), t.data.data() + i * sample_size());
    return t;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out(height_, width_);
    out.pixels_.reserve(indices.size() * sample_size());
    for (std::size_t i : indices) {
        out.pixels_.insert(out.pixels_.end(), sample(i), sample(i) + sample_size());
        out.labels_.push_back(labels_.at(i));
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ArgumentError("train: learning_rate must be > 0");
    if (batch_size < 2) throw ArgumentError("train: batch_size must be >= 2");
    if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("train: dropout_rate must be in [0, 1)");
    if (plateau_patience < 1) throw ArgumentError("train: plateau_patience must be >= 1");
    // A factor of 1 or more would let the schedule raise the rate.
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ArgumentError("train: plateau_factor must be in (0, 1)");
    if (!(min_lr >= 0.0)) throw ArgumentError("train: min_lr must be >= 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw ArgumentError("train: validation_fraction must be in [0, 1)");
}

std::string TrainingCurves::csv() const {
    std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
    char line[256];
    for (const EpochRecord& e : epochs) {
        std::snprintf(line, sizeof line, "%d,%.10f,%.6f,%.10f,%.6f,%.9g\n", e.epoch, e.train_loss, e.train_acc,
                      e.val_loss, e.val_acc, e.lr);
        out += line;
    }
    return out;
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

// Fisher-Yates with a multiply-shift index draw, so the permutation does not
// depend on the standard library's distribution implementation.
void shuffle(std::vector<std::size_t>& v, std::mt19937_64& engine) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>((static_cast<unsigned __int128>(engine()) * i) >> 64);
        std::swap(v[i - 1], v[j]);
    }
}

int argmax_row(const Tensor& probs, std::size_t row) {
    const std::size_t k = probs.dim(1);
    const double* p = probs.data.data() + row * k;
    return static_cast<int>(std::max_element(p, p + k) - p);
}

}  // namespace

Split stratified_split(std::span<const int> labels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ArgumentError("split: fraction must be in [0, 1)");
    int max_label = -1;
    for (int l : labels) {
        if (l < 0) throw ArgumentError("split: negative label");
        max_label = std::max(max_label, l);
    }
    Split split;
    for (int c = 0; c <= max_label; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        auto engine = stream(seed, static_cast<std::uint64_t>(c), 0x5b11u);
        shuffle(members, engine);
        auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
        if (fraction > 0.0 && n_val == 0 && members.size() >= 2) n_val = 1;
        split.val.insert(split.val.end(), members.begin(), members.begin() + static_cast<long>(n_val));
        split.train.insert(split.train.end(), members.begin() + static_cast<long>(n_val), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

TrainingCurves train(Model& model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw ArgumentError("train: empty dataset");
    const Split split = stratified_split(data.labels(), config.validation_fraction, config.seed);
    return train(model, data.subset(split.train), data.subset(split.val), config);
}

Evaluation evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
    if (data.empty()) throw ArgumentError("evaluate: empty dataset");
    if (batch_size == 0) throw ArgumentError("evaluate: batch_size must be >= 1");
    Evaluation ev;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
        const Tensor probs = softmax(model.forward(data.batch(idx), Mode::infer));
        std::vector<int> labels;
        for (std::size_t i : idx) labels.push_back(data.labels()[i]);
        loss_sum += cce_loss(probs, one_hot(labels, probs.dim(1))) * static_cast<double>(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const int p = argmax_row(probs, r);
            ev.predicted.push_back(p);
            correct += p == labels[r];
        }
    }
    ev.loss = loss_sum / static_cast<double>(data.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return ev;
}

TrainingCurves train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.size() < 2) throw ArgumentError("train: need at least two training samples");
    {
        std::vector<int> seen;
        for (int l : train_set.labels()) {
            if (l < 0) throw ArgumentError("train: negative label");
            if (std::find(seen.begin(), seen.end(), l) == seen.end()) seen.push_back(l);
        }
        if (seen.size() < 2) throw ArgumentError("train: at least two classes must be represented");
    }
    if (val_set.empty()) log::warn("train: empty validation set, scheduling on training loss");

    Adam adam(model.parameters());
    PlateauScheduler scheduler(config.learning_rate, config.plateau_patience, config.plateau_factor, config.min_lr);
    TrainingCurves curves;
    std::vector<std::size_t> order(train_set.size());

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = scheduler.lr();
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto engine = stream(config.seed, static_cast<std::uint64_t>(epoch), 0xe90cu);
        shuffle(order, engine);

        std::vector<std::pair<std::size_t, std::size_t>> batches;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size)
            batches.emplace_back(start, std::min(start + config.batch_size, order.size()));
        if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
            batches[batches.size() - 2].second = batches.back().second;
            batches.pop_back();
        }

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& [begin, end] : batches) {
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            std::vector<int> labels;
            for (std::size_t i : idx) labels.push_back(train_set.labels()[i]);
            model.zero_grad();
            const Tensor probs = softmax(model.forward(train_set.batch(idx), Mode::train));
            const Tensor targets = one_hot(labels, probs.dim(1));
            const double loss = cce_loss(probs, targets);
            if (!std::isfinite(loss)) throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
            model.backward(softmax_cce_grad(probs, targets));
            adam.step(lr);
            loss_sum += loss * static_cast<double>(idx.size());
            for (std::size_t r = 0; r < idx.size(); ++r) correct += argmax_row(probs, r) == labels[r];
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        if (!val_set.empty()) {
            const Evaluation ev = evaluate(model, val_set, config.batch_size);
            rec.val_loss = ev.loss;
            rec.val_acc = ev.accuracy;
        } else {
            rec.val_loss = rec.train_loss;
            rec.val_acc = rec.train_acc;
        }
        curves.epochs.push_back(rec);
        log::info("epoch " + std::to_string(epoch) + " train_loss " + std::to_string(rec.train_loss) + " val_acc " +
                  std::to_string(rec.val_acc));
        scheduler.observe(rec.val_loss);
    }
    return curves;
}

Prediction predict(Model& model, const Image& image, bool allow_resize) {
    const Shape& in = model.input_shape();
    if (in.size() != 3 || in[0] != 1) throw ArgumentError("predict: model does not take single-channel images");
    const int h = static_cast<int>(in[1]), w = static_cast<int>(in[2]);
    Image input = image;
    if (image.width() != w || image.height() != h) {
        if (!allow_resize)
            throw ArgumentError("predict: image is " + std::to_string(image.width()) + "x" +
                                std::to_string(image.height()) + ", model expects " + std::to_string(w) + "x" +
                                std::to_string(h));
        input = resize_bilinear(image, w, h);
    }
    Dataset one(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    one.add(input, 0);
    const std::size_t idx = 0;
    const Tensor probs = softmax(model.forward(one.batch({&idx, 1}), Mode::infer));
    Prediction p;
    p.probabilities = probs.data;
    p.label = argmax_row(probs, 0);
    return p;
}

}  // namespace mriprep::nnet
