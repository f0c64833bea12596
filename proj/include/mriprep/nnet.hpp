#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mriprep::nnet {

using Shape = std::vector<std::size_t>;

// Dense row-major array. Batched activations are [N, C, H, W] or [N, F].
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    // Elements per leading index (product of shape[1..]).
    std::size_t stride0() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(const Shape& shape) noexcept;

// Reshapes t in place, reusing its storage when large enough. Contents are
// unspecified unless `zero` is set.
void reshape_buffer(Tensor& t, const Shape& shape, bool zero = false);
std::string shape_string(const Shape& shape);

// Throws NumericError naming `context` when any value is NaN or infinite.
void require_finite(const Tensor& t, const char* context);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;
};

enum class Mode { train, infer };

class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    // Shape of one sample out, given one sample in (batch axis excluded).
    virtual Shape output_shape(const Shape& input) const = 0;
    // x carries a leading batch axis and must stay alive, unmodified, until
    // the matching backward call. The result lives in a buffer owned by the
    // layer and is overwritten by the next forward call.
    virtual const Tensor& forward(const Tensor& x, Mode mode) = 0;
    // Accumulates parameter gradients and returns dL/dx in a layer-owned
    // buffer (an empty tensor when need_input_grad is false).
    virtual const Tensor& backward(const Tensor& dy, bool need_input_grad) = 0;

    virtual std::vector<Parameter*> parameters() { return {}; }
    // Non-trainable persistent tensors (batch-norm running statistics).
    virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }

    bool has_trainable();
};

class Conv2d : public Layer {
public:
    // weight [out, in, k, k], bias [out]; cross-correlation.
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
           std::size_t pad = 0);

    std::string kind() const override { return "conv2d"; }
    Shape output_shape(const Shape& input) const override;
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;
    std::vector<Parameter*> parameters() override { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;

private:
    std::size_t in_, out_, k_, stride_, pad_;
    const Tensor* input_ = nullptr;
    Tensor output_, grad_;
    std::vector<double> col_;
    std::vector<double> dcol_;
};

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(std::size_t channels, double momentum = 0.9, double eps = 1e-8);

    std::string kind() const override { return "batchnorm2d"; }
    Shape output_shape(const Shape& input) const override { return input; }
    // Train mode normalizes by batch statistics (batch >= 2) and updates the
    // running statistics; a frozen layer always runs in inference mode.
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;
    std::vector<Parameter*> parameters() override { return {&gamma, &beta}; }
    std::vector<std::pair<std::string, Tensor*>> buffers() override;

    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;

private:
    std::size_t channels_;
    double momentum_, eps_;
    bool used_batch_stats_ = false;
    const Tensor* input_ = nullptr;
    Tensor output_, grad_;
    std::vector<double> mean_, inv_std_;
};

class ReLU : public Layer {
public:
    std::string kind() const override { return "relu"; }
    Shape output_shape(const Shape& input) const override { return input; }
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;

private:
    Tensor output_, grad_;
};

// Non-overlapping window x window pooling; trailing rows/columns that do not
// fill a window are dropped.
class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(std::size_t window = 2);

    std::string kind() const override { return "maxpool2d"; }
    Shape output_shape(const Shape& input) const override;
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;

private:
    std::size_t window_;
    Shape input_shape_;
    std::vector<std::uint32_t> argmax_;
    Tensor output_, grad_;
};

// [N, C, H, W] -> [N, C]
class GlobalAvgPool : public Layer {
public:
    std::string kind() const override { return "gap"; }
    Shape output_shape(const Shape& input) const override;
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;

private:
    Shape input_shape_;
    Tensor output_, grad_;
};

// Inverted dropout. The mask of the n-th training-mode forward call is a pure
// function of (seed, n).
class Dropout : public Layer {
public:
    Dropout(double rate, std::uint64_t seed);

    std::string kind() const override { return "dropout"; }
    Shape output_shape(const Shape& input) const override { return input; }
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;

    double rate() const noexcept { return rate_; }
    std::uint64_t draw() const noexcept { return draw_; }
    void set_draw(std::uint64_t draw) noexcept { draw_ = draw; }

private:
    double rate_;
    std::uint64_t seed_;
    std::uint64_t draw_ = 0;
    std::vector<double> scale_;  // 0 or 1 / (1 - rate) per unit of the last train forward
    Tensor output_, grad_;
};

// [N, in] -> [N, out]; weight [out, in], bias [out].
class Dense : public Layer {
public:
    Dense(std::size_t in_features, std::size_t out_features);

    std::string kind() const override { return "dense"; }
    Shape output_shape(const Shape& input) const override;
    const Tensor& forward(const Tensor& x, Mode mode) override;
    const Tensor& backward(const Tensor& dy, bool need_input_grad) override;
    std::vector<Parameter*> parameters() override { return {&weight, &bias}; }

    Parameter weight;
    Parameter bias;

private:
    std::size_t in_, out_;
    const Tensor* input_ = nullptr;
    Tensor output_, grad_;
};

// Row-wise softmax of [N, K] logits with max subtraction. Throws NumericError
// on non-finite logits.
Tensor softmax(const Tensor& logits);

// Mean over rows of -sum y log(max(p, 1e-12)). Throws ArgumentError when a
// target row is not one-hot or shapes differ.
double cce_loss(const Tensor& probs, const Tensor& onehot);

// Gradient of cce_loss(softmax(logits)) w.r.t. the logits: (p - y) / N.
Tensor softmax_cce_grad(const Tensor& probs, const Tensor& onehot);

Tensor one_hot(std::span<const int> labels, std::size_t classes);

// Architecture of the small convolutional feature extractor plus head.
struct MiniBackboneSpec {
    std::size_t channels = 1;
    std::size_t input_size = 150;
    std::vector<std::size_t> widths{16, 32, 64};
    std::size_t num_classes = 4;
    double dropout_rate = 0.2;

    std::string tag() const;
    // Inverse of tag(); throws ArgumentError on anything malformed.
    static MiniBackboneSpec parse(const std::string& tag);
};

class Model {
public:
    Model() = default;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    void add(std::unique_ptr<Layer> layer);
    void replace_layer(std::size_t i, std::unique_ptr<Layer> layer);
    std::size_t layer_count() const noexcept { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }

    // Layers [0, backbone_end) form the feature extractor.
    std::size_t backbone_end() const noexcept { return backbone_end_; }
    void set_backbone_end(std::size_t end) { backbone_end_ = end; }

    const std::string& arch_tag() const noexcept { return arch_tag_; }
    void set_arch_tag(std::string tag) { arch_tag_ = std::move(tag); }
    const Shape& input_shape() const noexcept { return input_shape_; }
    void set_input_shape(Shape shape) { input_shape_ = std::move(shape); }

    // Logits for a batch [N, ...input_shape].
    Tensor forward(const Tensor& x, Mode mode);
    // Back-propagates dL/dlogits. Layers below the lowest trainable
    // parameter are skipped entirely.
    void backward(const Tensor& dlogits);
    void zero_grad();

    std::vector<Parameter*> parameters();
    std::vector<std::pair<std::string, Tensor*>> buffers();
    std::size_t parameter_count();

    // Backbone parameters stop receiving updates; backbone batch norm runs in
    // inference mode.
    void freeze_backbone();
    void unfreeze_all();

    // Shapes of every layer output for one sample, starting with the input.
    std::vector<Shape> trace_shapes() const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::size_t backbone_end_ = 0;
    std::string arch_tag_;
    Shape input_shape_;
    Tensor input_;
};

// He-uniform weights, zero biases, gamma 1, beta 0, all drawn from `seed`.
Model build_model(const MiniBackboneSpec& spec = {}, std::uint64_t seed = 0);

// New dense head with `num_classes` outputs; re-initializes it from `seed`
// and updates the architecture tag.
void replace_head(Model& model, std::size_t num_classes, std::uint64_t seed);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update on a flat parameter block; t is the
// 1-based step count after increment.
void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::uint64_t t, double lr, const AdamHyper& hyper = {});

class Adam {
public:
    explicit Adam(const std::vector<Parameter*>& params, AdamHyper hyper = {});

    // Increments t, then updates every non-frozen parameter from its grad.
    void step(double lr);

    std::uint64_t timestep() const noexcept { return t_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<Parameter*> params_;
    AdamHyper hyper_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

// ReduceLROnPlateau on a value to minimize: an epoch improves when the value
// is strictly below the best seen; after `patience` consecutive epochs
// without improvement the rate is multiplied by `factor` (floored at min_lr)
// and the counter restarts.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, int patience, double factor, double min_lr);

    // Records one epoch's monitored value; returns the rate for the next epoch.
    double observe(double value);
    double lr() const noexcept { return lr_; }
    int wait() const noexcept { return wait_; }

private:
    double lr_;
    int patience_;
    double factor_;
    double min_lr_;
    double best_;
    int wait_ = 0;
};

// Rate in force after each epoch of `history` (same length), replayed from
// initial_lr.
std::vector<double> reduce_lr_on_plateau(std::span<const double> history, double initial_lr, int patience,
                                         double factor, double min_lr);

// Versioned little-endian container: magic, version, architecture tag, named
// tensors (parameters with frozen flags, then buffers), CRC-32 trailer.
void save_checkpoint(Model& model, const std::filesystem::path& path);
// Throws CorruptCheckpointError on bad magic, version, checksum, truncation
// or a tensor table that does not match the architecture tag.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace mriprep::nnet
