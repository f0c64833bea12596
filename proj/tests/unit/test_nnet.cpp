#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "mriprep/errors.hpp"
#include "mriprep/nnet.hpp"

using namespace mriprep;
using nnet::Mode;
using nnet::Tensor;

namespace {

Tensor random_tensor(nnet::Shape shape, std::uint64_t seed) {
    phantom::Rng rng(seed, 0x11);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void randomize(nnet::Parameter& p, std::uint64_t seed) {
    phantom::Rng rng(seed, 0x22);
    for (double& v : p.value.data) v = rng.uniform(-1.0, 1.0);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream(path, std::ios::binary) << bytes;
}

nnet::MiniBackboneSpec tiny_spec() {
    nnet::MiniBackboneSpec spec;
    spec.input_size = 16;
    spec.widths = {3, 4};
    return spec;
}

}  // namespace

TEST_CASE("conv2d forward matches a direct correlation") {
    for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 0}, {2, 1}}) {
        nnet::Conv2d conv(2, 3, 3, stride, pad);
        randomize(conv.weight, 1);
        randomize(conv.bias, 2);
        const Tensor x = random_tensor({2, 2, 7, 6}, 3);
        const Tensor& y = conv.forward(x, Mode::train);
        const std::size_t oh = (7 + 2 * pad - 3) / stride + 1, ow = (6 + 2 * pad - 3) / stride + 1;
        REQUIRE(y.shape == nnet::Shape{2, 3, oh, ow});
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t o = 0; o < 3; ++o)
                for (std::size_t i = 0; i < oh; ++i)
                    for (std::size_t j = 0; j < ow; ++j) {
                        double s = conv.bias.value.data[o];
                        for (std::size_t c = 0; c < 2; ++c)
                            for (std::size_t u = 0; u < 3; ++u)
                                for (std::size_t v = 0; v < 3; ++v) {
                                    const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                                    const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                                    if (r < 0 || q < 0 || r >= 7 || q >= 6) continue;
                                    s += conv.weight.value.data[((o * 2 + c) * 3 + u) * 3 + v] *
                                         x.data[((n * 2 + c) * 7 + r) * 6 + q];
                                }
                        CHECK(y.data[((n * 3 + o) * oh + i) * ow + j] == doctest::Approx(s).epsilon(1e-12));
                    }
    }
}

TEST_CASE("dense forward and backward against matrix oracles") {
    nnet::Dense dense(4, 3);
    randomize(dense.weight, 4);
    randomize(dense.bias, 5);
    const Tensor x = random_tensor({2, 4}, 6);
    const Tensor y = dense.forward(x, Mode::train);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 3; ++o) {
            double s = dense.bias.value.data[o];
            for (std::size_t i = 0; i < 4; ++i) s += dense.weight.value.data[o * 4 + i] * x.data[n * 4 + i];
            CHECK(y.data[n * 3 + o] == doctest::Approx(s).epsilon(1e-12));
        }
    const Tensor dy = random_tensor({2, 3}, 7);
    const Tensor dx = dense.backward(dy, true);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t o = 0; o < 3; ++o) s += dy.data[n * 3 + o] * dense.weight.value.data[o * 4 + i];
            CHECK(dx.data[n * 4 + i] == doctest::Approx(s).epsilon(1e-12));
        }
    CHECK(dense.bias.grad.data[1] == doctest::Approx(dy.data[1] + dy.data[4]));
    CHECK(dense.backward(dy, false).size() == 0);
}

TEST_CASE("maxpool routes gradient to the window maximum and drops the border") {
    nnet::MaxPool2d pool(2);
    const Tensor x({1, 1, 3, 5}, std::vector<double>{1, 5, 2, 0, 9,  //
                                                     3, 4, 8, 1, 9,  //
                                                     7, 7, 7, 7, 7});
    const Tensor& y = pool.forward(x, Mode::train);
    CHECK(y.shape == nnet::Shape{1, 1, 1, 2});
    CHECK(y.data == std::vector<double>{5, 8});
    const Tensor& dx = pool.backward(Tensor({1, 1, 1, 2}, std::vector<double>{10, 20}), true);
    CHECK(dx.data == std::vector<double>{0, 10, 0, 0, 0, 0, 0, 20, 0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("global average pool") {
    nnet::GlobalAvgPool gap;
    const Tensor x = random_tensor({2, 3, 2, 2}, 8);
    const Tensor& y = gap.forward(x, Mode::train);
    CHECK(y.shape == nnet::Shape{2, 3});
    CHECK(y.data[4] == doctest::Approx((x.data[16] + x.data[17] + x.data[18] + x.data[19]) / 4.0));
    const Tensor& dx = gap.backward(Tensor({2, 3}, 1.0), true);
    for (double v : dx.data) CHECK(v == 0.25);
}

TEST_CASE("batch norm normalizes per channel and tracks running statistics") {
    nnet::BatchNorm2d bn(2);
    const Tensor x = random_tensor({4, 2, 3, 3}, 9);
    const Tensor& y = bn.forward(x, Mode::train);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0, s2 = 0, xs = 0, xs2 = 0;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 9; ++i) {
                const double v = y.data[(n * 2 + c) * 9 + i], u = x.data[(n * 2 + c) * 9 + i];
                s += v, s2 += v * v, xs += u, xs2 += u * u;
            }
        CHECK(s / 36 == doctest::Approx(0.0).scale(1.0));
        CHECK(s2 / 36 == doctest::Approx(1.0).epsilon(1e-6));
        const double mu = xs / 36, unbiased = (xs2 - 36 * mu * mu) / 35;
        CHECK(bn.running_mean.data[c] == doctest::Approx(0.1 * mu).epsilon(1e-12));
        CHECK(bn.running_var.data[c] == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-12));
    }
    // Inference uses the running statistics.
    const Tensor& z = bn.forward(x, Mode::infer);
    CHECK(z.data[0] == doctest::Approx((x.data[0] - bn.running_mean.data[0]) /
                                       std::sqrt(bn.running_var.data[0] + 1e-8)));
}

TEST_CASE("dropout is identity at inference and pinned by its draw counter") {
    nnet::Dropout drop(0.5, 3);
    const Tensor x({1, 1000}, 1.0);
    CHECK(drop.forward(x, Mode::infer).data == x.data);
    drop.set_draw(4);
    const Tensor a = drop.forward(x, Mode::train);
    CHECK(drop.draw() == 5);
    const Tensor b = drop.forward(x, Mode::train);
    drop.set_draw(4);
    CHECK(drop.forward(x, Mode::train).data == a.data);
    CHECK(a.data != b.data);
    std::size_t kept = 0;
    for (double v : a.data) {
        CHECK((v == 0.0 || v == 2.0));
        kept += v != 0.0;
    }
    CHECK(kept > 430);
    CHECK(kept < 570);
}

TEST_CASE("softmax and cross-entropy") {
    const Tensor logits({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
    const Tensor p = nnet::softmax(logits);
    for (std::size_t n = 0; n < 2; ++n) {
        CHECK(p.data[n * 3] + p.data[n * 3 + 1] + p.data[n * 3 + 2] == doctest::Approx(1.0));
        CHECK(p.data[n * 3 + 2] > p.data[n * 3 + 1]);
    }
    const double e0 = std::exp(-2.0), e1 = std::exp(-1.0);
    CHECK(p.data[0] == doctest::Approx(e0 / (e0 + e1 + 1.0)).epsilon(1e-12));
    const std::vector<int> labels{2, 0};
    const Tensor y = nnet::one_hot(labels, 3);
    CHECK(nnet::cce_loss(p, y) == doctest::Approx(-(std::log(p.data[2]) + std::log(p.data[3])) / 2.0));
    const Tensor g = nnet::softmax_cce_grad(p, y);
    CHECK(g.data[2] == doctest::Approx((p.data[2] - 1.0) / 2.0));
    CHECK(g.data[4] == doctest::Approx(p.data[4] / 2.0));
    CHECK_THROWS_AS(nnet::cce_loss(p, Tensor({2, 3}, 0.5)), ArgumentError);
    CHECK_THROWS_AS(nnet::softmax(Tensor({1, 2}, std::vector<double>{0.0, NAN})), NumericError);
}

TEST_CASE("default architecture shapes and tag round trip") {
    nnet::Model model = nnet::build_model();
    const auto shapes = model.trace_shapes();
    CHECK(shapes.front() == nnet::Shape{1, 150, 150});
    CHECK(shapes.back() == nnet::Shape{4});
    const nnet::MiniBackboneSpec spec = nnet::MiniBackboneSpec::parse(model.arch_tag());
    CHECK(spec.tag() == model.arch_tag());
    CHECK(spec.widths == std::vector<std::size_t>{16, 32, 64});
    CHECK_THROWS_AS(nnet::MiniBackboneSpec::parse("nonsense"), ArgumentError);
    CHECK(model.backbone_end() < model.layer_count());
}

TEST_CASE("model construction is seeded") {
    nnet::Model a = nnet::build_model(tiny_spec(), 1), b = nnet::build_model(tiny_spec(), 1),
                c = nnet::build_model(tiny_spec(), 2);
    const Tensor x = random_tensor({2, 1, 16, 16}, 10);
    CHECK(a.forward(x, Mode::infer) == b.forward(x, Mode::infer));
    CHECK_FALSE(a.forward(x, Mode::infer) == c.forward(x, Mode::infer));
}

TEST_CASE("freezing stops backbone gradients and updates") {
    nnet::Model model = nnet::build_model(tiny_spec(), 3);
    model.freeze_backbone();
    std::vector<Tensor> before;
    for (nnet::Parameter* p : model.parameters()) before.push_back(p->value);
    nnet::Adam adam(model.parameters());
    const Tensor x = random_tensor({4, 1, 16, 16}, 11);
    const std::vector<int> labels{0, 1, 2, 3};
    model.zero_grad();
    model.backward(nnet::softmax_cce_grad(nnet::softmax(model.forward(x, Mode::train)), nnet::one_hot(labels, 4)));
    adam.step(0.01);
    const auto params = model.parameters();
    bool head_moved = false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->frozen) {
            CHECK(params[i]->value == before[i]);
            for (double g : params[i]->grad.data) CHECK(g == 0.0);
        } else {
            head_moved = head_moved || !(params[i]->value == before[i]);
        }
    }
    CHECK(head_moved);
    model.unfreeze_all();
    for (nnet::Parameter* p : model.parameters()) CHECK_FALSE(p->frozen);
}

TEST_CASE("replace_head changes the class count") {
    nnet::Model model = nnet::build_model(tiny_spec(), 4);
    nnet::replace_head(model, 7, 5);
    CHECK(model.forward(random_tensor({2, 1, 16, 16}, 12), Mode::infer).shape == nnet::Shape{2, 7});
    CHECK(nnet::MiniBackboneSpec::parse(model.arch_tag()).num_classes == 7);
}

TEST_CASE("checkpoint round trip and corruption") {
    testing::TempDir dir("ckpt");
    nnet::Model model = nnet::build_model(tiny_spec(), 6);
    model.layer(1).buffers().front().second->data[0] = 0.25;  // non-default running mean
    nnet::replace_head(model, 4, 7);
    model.freeze_backbone();
    nnet::save_checkpoint(model, dir / "m.ckpt");
    nnet::Model loaded = nnet::load_checkpoint(dir / "m.ckpt");
    const Tensor x = random_tensor({3, 1, 16, 16}, 13);
    CHECK(loaded.forward(x, Mode::infer) == model.forward(x, Mode::infer));
    CHECK(loaded.arch_tag() == model.arch_tag());
    const auto a = model.parameters(), b = loaded.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->frozen == b[i]->frozen);

    const std::string bytes = read_file(dir / "m.ckpt");
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    write_file(dir / "flip.ckpt", flipped);
    CHECK_THROWS_AS(nnet::load_checkpoint(dir / "flip.ckpt"), CorruptCheckpointError);
    write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(nnet::load_checkpoint(dir / "short.ckpt"), CorruptCheckpointError);
    std::string magic = bytes;
    magic[0] = 'X';
    write_file(dir / "magic.ckpt", magic);
    CHECK_THROWS_AS(nnet::load_checkpoint(dir / "magic.ckpt"), CorruptCheckpointError);
    CHECK_THROWS_AS(nnet::load_checkpoint(dir / "absent.ckpt"), Error);
}

TEST_CASE("adam step against an independent evaluation") {
    std::vector<double> p{0.5, -1.0, 2.0}, g{0.1, -0.3, 0.0}, m(3, 0.0), v(3, 0.0);
    std::vector<double> po = p, mo = m, vo = v;
    for (std::uint64_t t = 1; t <= 5; ++t) {
        for (double& gi : g) gi *= 1.1;
        nnet::adam_update(p, g, m, v, t, 0.01);
        for (std::size_t i = 0; i < 3; ++i) {
            mo[i] = 0.9 * mo[i] + 0.1 * g[i];
            vo[i] = 0.999 * vo[i] + 0.001 * g[i] * g[i];
            const double mh = mo[i] / (1 - std::pow(0.9, t)), vh = vo[i] / (1 - std::pow(0.999, t));
            po[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
        for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(po[i]).epsilon(1e-13));
    }
    CHECK(p[2] == 2.0);
}

TEST_CASE("plateau scheduler") {
    nnet::PlateauScheduler s(1.0, 2, 0.5, 0.2);
    CHECK(s.observe(1.0) == 1.0);
    CHECK(s.observe(1.0) == 1.0);   // not strictly better
    CHECK(s.observe(1.1) == 0.5);   // second stall: reduce, counter restarts
    CHECK(s.wait() == 0);
    CHECK(s.observe(0.9) == 0.5);
    CHECK(s.observe(0.95) == 0.5);
    CHECK(s.observe(0.95) == 0.25);
    CHECK(s.observe(0.95) == 0.25);
    CHECK(s.observe(0.95) == 0.2);  // floored at min_lr
    const std::vector<double> history{1.0, 0.9, 0.91, 0.92};
    CHECK(nnet::reduce_lr_on_plateau(history, 3e-4, 2, 0.3, 1e-6) ==
          std::vector<double>{3e-4, 3e-4, 3e-4, 3e-4 * 0.3});
}

TEST_CASE("tensor helpers") {
    CHECK(nnet::shape_size({2, 3, 4}) == 24);
    CHECK(nnet::shape_string({2, 3}) == "[2, 3]");
    Tensor t({2, 2}, 1.0);
    nnet::reshape_buffer(t, {3}, true);
    CHECK(t.shape == nnet::Shape{3});
    CHECK(t.data == std::vector<double>{0, 0, 0});
    CHECK_THROWS_AS(nnet::require_finite(Tensor({1}, INFINITY), "t"), NumericError);
}
