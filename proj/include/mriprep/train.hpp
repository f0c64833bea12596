#pragma once

#include <cstdint>
#include <vector>

#include "mriprep/image.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::nnet {

// Labelled single-channel images of one common size, stored as a flat
// [N, 1, H, W] buffer.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t height, std::size_t width) : height_(height), width_(width) {}

    // Throws ArgumentError when the image size differs from the dataset's.
    void add(const Image& image, int label);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t sample_size() const noexcept { return height_ * width_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const double* sample(std::size_t i) const { return pixels_.data() + i * sample_size(); }

    Tensor batch(std::span<const std::size_t> indices) const;
    Dataset subset(std::span<const std::size_t> indices) const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> pixels_;
    std::vector<int> labels_;
};

struct TrainConfig {
    double learning_rate = 3e-4;
    std::size_t batch_size = 32;
    int epochs = 12;
    double dropout_rate = 0.2;  // applied when the model is built
    int plateau_patience = 2;
    double plateau_factor = 0.3;
    double min_lr = 1e-6;
    std::uint64_t seed = 0;
    double validation_fraction = 0.2;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;  // rate used during this epoch
};

struct TrainingCurves {
    std::vector<EpochRecord> epochs;

    // "epoch,train_loss,train_acc,val_loss,val_acc,lr" plus one row per epoch.
    std::string csv() const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

// Per class, a seeded shuffle followed by round(fraction * count) samples to
// validation (at least one when the class has two or more samples).
Split stratified_split(std::span<const int> labels, double fraction, std::uint64_t seed);

// Stratified validation split, then train(model, train, val, config).
TrainingCurves train(Model& model, const Dataset& data, const TrainConfig& config);

// Seeded per-epoch shuffle, mini-batches of batch_size (a trailing batch of
// one is merged into the previous batch because batch norm needs two
// samples), Adam, validation in inference mode, plateau schedule on
// validation loss. Fully deterministic for a given seed and backend.
TrainingCurves train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predicted;
};

// Inference-mode pass in batches of batch_size.
Evaluation evaluate(Model& model, const Dataset& data, std::size_t batch_size = 32);

struct Prediction {
    std::vector<double> probabilities;
    int label = 0;
};

// Inference mode. A mismatched image size is resized when allow_resize is
// set and is an ArgumentError otherwise.
Prediction predict(Model& model, const Image& image, bool allow_resize = false);

}  // namespace mriprep::nnet
