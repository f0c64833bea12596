#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"

namespace mriprep::nnet {

namespace {

void qualify_names(Layer& layer, std::size_t index) {
    const std::string prefix = std::to_string(index) + "." + layer.kind() + ".";
    for (Parameter* p : layer.parameters())
        if (p->name.find('.') == std::string::npos) p->name = prefix + p->name;
}

}  // namespace

void Model::add(std::unique_ptr<Layer> layer) {
    qualify_names(*layer, layers_.size());
    layers_.push_back(std::move(layer));
}

void Model::replace_layer(std::size_t i, std::unique_ptr<Layer> layer) {
    qualify_names(*layer, i);
    layers_.at(i) = std::move(layer);
}

Tensor Model::forward(const Tensor& x, Mode mode) {
    if (x.shape.size() != input_shape_.size() + 1 || !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1))
        throw ArgumentError("model: input " + shape_string(x.shape) + " does not match [N, " +
                            shape_string(input_shape_).substr(1));
    // Layers keep a pointer to their input for backward, so the model owns a
    // copy of the batch rather than trusting the caller's lifetime.
    input_.shape = x.shape;
    input_.data.assign(x.data.begin(), x.data.end());
    const Tensor* h = &input_;
    for (auto& l : layers_) h = &l->forward(*h, mode);
    return *h;
}

void Model::backward(const Tensor& dlogits) {
    std::size_t lowest = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i]->has_trainable()) {
            lowest = i;
            break;
        }
    if (lowest == layers_.size()) return;
    const Tensor* g = &dlogits;
    for (std::size_t i = layers_.size(); i-- > lowest;) g = &layers_[i]->backward(*g, i > lowest);
}

void Model::zero_grad() {
    for (Parameter* p : parameters()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
        for (Parameter* p : l->parameters()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto& [name, t] : layers_[i]->buffers())
            out.emplace_back(std::to_string(i) + "." + layers_[i]->kind() + "." + name, t);
    return out;
}

std::size_t Model::parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += p->value.size();
    return n;
}

void Model::freeze_backbone() {
    for (std::size_t i = 0; i < backbone_end_ && i < layers_.size(); ++i)
        for (Parameter* p : layers_[i]->parameters()) p->frozen = true;
}

void Model::unfreeze_all() {
    for (Parameter* p : parameters()) p->frozen = false;
}

std::vector<Shape> Model::trace_shapes() const {
    std::vector<Shape> shapes{input_shape_};
    for (const auto& l : layers_) shapes.push_back(l->output_shape(shapes.back()));
    return shapes;
}

// ---------------------------------------------------------------------------
// Architecture tag: "minibackbone:c=1;s=150;w=16,32,64;k=4;d=0.2"

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view text, const std::string& tag) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw ArgumentError("architecture tag: bad number '" + std::string(text) + "' in '" + tag + "'");
    return value;
}

}  // namespace

std::string MiniBackboneSpec::tag() const {
    std::string t = "minibackbone:c=" + std::to_string(channels) + ";s=" + std::to_string(input_size) + ";w=";
    for (std::size_t i = 0; i < widths.size(); ++i) t += (i ? "," : "") + std::to_string(widths[i]);
    return t + ";k=" + std::to_string(num_classes) + ";d=" + format_double(dropout_rate);
}

MiniBackboneSpec MiniBackboneSpec::parse(const std::string& tag) {
    constexpr std::string_view prefix = "minibackbone:";
    if (tag.rfind(prefix, 0) != 0) throw ArgumentError("architecture tag: unknown family in '" + tag + "'");
    MiniBackboneSpec spec;
    spec.widths.clear();
    unsigned seen = 0;
    std::string_view rest = std::string_view(tag).substr(prefix.size());
    while (!rest.empty()) {
        const std::size_t end = rest.find(';');
        const std::string_view field = rest.substr(0, end);
        rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end + 1);
        const std::size_t eq = field.find('=');
        if (eq != 1) throw ArgumentError("architecture tag: malformed field in '" + tag + "'");
        const std::string_view value = field.substr(2);
        switch (field[0]) {
            case 'c': spec.channels = parse_number<std::size_t>(value, tag); seen |= 1; break;
            case 's': spec.input_size = parse_number<std::size_t>(value, tag); seen |= 2; break;
            case 'k': spec.num_classes = parse_number<std::size_t>(value, tag); seen |= 4; break;
            case 'd': spec.dropout_rate = parse_number<double>(value, tag); seen |= 8; break;
            case 'w': {
                std::string_view list = value;
                while (!list.empty()) {
                    const std::size_t comma = list.find(',');
                    spec.widths.push_back(parse_number<std::size_t>(list.substr(0, comma), tag));
                    list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
                }
                seen |= 16;
                break;
            }
            default: throw ArgumentError("architecture tag: unknown field in '" + tag + "'");
        }
    }
    if (seen != 31 || spec.widths.empty() || spec.channels == 0 || spec.num_classes == 0)
        throw ArgumentError("architecture tag: incomplete '" + tag + "'");
    return spec;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

void he_uniform(Parameter& weight, std::size_t fan_in, std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x5eedu};
    std::mt19937_64 engine(seq);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : weight.value.data) {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        w = (2.0 * u - 1.0) * limit;
    }
}

}  // namespace

Model build_model(const MiniBackboneSpec& spec, std::uint64_t seed) {
    if (spec.widths.empty()) throw ArgumentError("build_model: at least one conv block is required");
    Model model;
    model.set_input_shape({spec.channels, spec.input_size, spec.input_size});
    std::size_t in = spec.channels;
    for (std::size_t b = 0; b < spec.widths.size(); ++b) {
        auto conv = std::make_unique<Conv2d>(in, spec.widths[b], 3, 1, 1);
        he_uniform(conv->weight, in * 9, seed, model.layer_count());
        model.add(std::move(conv));
        model.add(std::make_unique<BatchNorm2d>(spec.widths[b]));
        model.add(std::make_unique<ReLU>());
        model.add(std::make_unique<MaxPool2d>(2));
        in = spec.widths[b];
    }
    model.set_backbone_end(model.layer_count());
    model.add(std::make_unique<GlobalAvgPool>());
    model.add(std::make_unique<Dropout>(spec.dropout_rate, seed ^ 0xd209u));
    auto dense = std::make_unique<Dense>(in, spec.num_classes);
    he_uniform(dense->weight, in, seed, model.layer_count());
    model.add(std::move(dense));
    model.set_arch_tag(spec.tag());
    model.trace_shapes();  // validates that every block has room to pool
    return model;
}

void replace_head(Model& model, std::size_t num_classes, std::uint64_t seed) {
    MiniBackboneSpec spec = MiniBackboneSpec::parse(model.arch_tag());
    const std::size_t last = model.layer_count() - 1;
    auto* old = dynamic_cast<Dense*>(&model.layer(last));
    if (!old) throw ArgumentError("replace_head: model does not end in a dense layer");
    const std::size_t in = old->weight.value.dim(1);
    auto dense = std::make_unique<Dense>(in, num_classes);
    he_uniform(dense->weight, in, seed, last);
    model.replace_layer(last, std::move(dense));
    spec.num_classes = num_classes;
    model.set_arch_tag(spec.tag());
}

}  // namespace mriprep::nnet
