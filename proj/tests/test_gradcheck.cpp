// Gradient verification for every layer type against central finite
// differences at float64, plus forward-path oracles computed by independent
// formulas. Spatial sizes stay at or below 4x4 and channel counts at or
// below 3 so the finite-difference sweeps stay fast.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "stmtk/nn/layers.hpp"
#include "stmtk/nn/resunet.hpp"
#include "stmtk/rng.hpp"

using stmtk::Rng;
using stmtk::nn::Tensor;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
    Tensor<double> t(n, c, h, w);
    for (auto& v : t.v) v = rng.normal() * scale;
    return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.same_shape(b));
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

// Central finite difference of eval() with respect to one scalar slot.
double fd_slot(const std::function<double()>& eval, double* slot) {
    const double x0 = *slot;
    const double h = 1e-6 * std::max(1.0, std::abs(x0));
    *slot = x0 + h;
    const double jp = eval();
    *slot = x0 - h;
    const double jm = eval();
    *slot = x0;
    return (jp - jm) / (2.0 * h);
}

struct GradErr {
    double vec_rel = 0.0;   // ||a - fd|| / max(||a||, ||fd||)
    double elem_rel = 0.0;  // max |a - fd| / max(|a|, |fd|, 1)
};

GradErr compare_grads(const std::function<double()>& eval, Tensor<double>& value,
                      const Tensor<double>& analytic) {
    REQUIRE(analytic.same_shape(value));
    double num = 0.0, na = 0.0, nf = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < value.v.size(); ++i) {
        const double fd = fd_slot(eval, &value.v[i]);
        const double a = analytic.v[i];
        num += (a - fd) * (a - fd);
        na += a * a;
        nf += fd * fd;
        worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0}));
    }
    GradErr e;
    // A conv bias feeding straight into batch norm has an identically zero
    // gradient (the mean subtraction cancels it); both sides then sit at
    // rounding-noise level and their ratio is meaningless. Compare against
    // zero instead once both norms are at the noise floor.
    const double scale = std::max(std::sqrt(na), std::sqrt(nf));
    e.vec_rel = scale < 1e-8 ? 0.0 : std::sqrt(num) / scale;
    e.elem_rel = worst;
    return e;
}

void require_close(const GradErr& e) {
    CHECK(e.vec_rel < 1e-6);
    CHECK(e.elem_rel < 1e-6);
}

}  // namespace

TEST_CASE("conv3x3 forward matches a hand-computed cell", "[nn]") {
    stmtk::nn::Conv2d<double> conv(1, 1, 3, 1, 1);
    // 2x2 input, all-ones kernel, bias 0.5: each output sums the 3x3
    // neighborhood that stays in bounds.
    for (auto& w : conv.weight.v) w = 1.0;
    conv.bias.v[0] = 0.5;
    Tensor<double> x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1.0;
    x.at(0, 0, 0, 1) = 2.0;
    x.at(0, 0, 1, 0) = 3.0;
    x.at(0, 0, 1, 1) = 4.0;
    const auto y = conv.forward(x);
    CHECK(y.at(0, 0, 0, 0) == Catch::Approx(10.5));
    CHECK(y.at(0, 0, 1, 1) == Catch::Approx(10.5));
    CHECK(y.at(0, 0, 0, 1) == Catch::Approx(10.5));
}

TEST_CASE("conv gradients match finite differences", "[nn][grad]") {
    Rng rng(42);
    struct Case {
        int ic, oc, k, stride, pad, h, w;
    };
    const Case cases[] = {
        {2, 3, 3, 1, 1, 4, 4},  // standard 3x3
        {2, 3, 3, 2, 1, 4, 4},  // downsampling 3x3
        {3, 2, 1, 1, 0, 3, 4},  // pointwise
        {2, 3, 1, 2, 0, 4, 4},  // strided pointwise projection
    };
    for (const auto& cs : cases) {
        stmtk::nn::Conv2d<double> conv(cs.ic, cs.oc, cs.k, cs.stride, cs.pad);
        conv.init(rng);
        for (auto& b : conv.bias.v) b = rng.normal() * 0.1;
        Tensor<double> x = random_tensor(2, cs.ic, cs.h, cs.w, rng);
        Tensor<double> r = random_tensor(2, cs.oc, conv.out_dim(cs.h), conv.out_dim(cs.w), rng);
        auto eval = [&]() { return dot(conv.forward(x), r); };
        eval();
        conv.gweight.zero();
        conv.gbias.zero();
        const Tensor<double> dx = conv.backward(r);
        const Tensor<double> gw = conv.gweight, gb = conv.gbias;
        require_close(compare_grads(eval, x, dx));
        require_close(compare_grads(eval, conv.weight, gw));
        require_close(compare_grads(eval, conv.bias, gb));
    }
}

TEST_CASE("transposed conv forward matches its closed form", "[nn]") {
    // Kernel size equals stride, so output cells partition cleanly:
    // y(b,o,2i+ky,2j+kx) = bias(o) + sum_c x(b,c,i,j) * w(c,o,ky,kx).
    Rng rng(7);
    stmtk::nn::ConvTranspose2d<double> up(3, 2);
    up.init(rng);
    for (auto& b : up.bias.v) b = rng.normal();
    Tensor<double> x = random_tensor(2, 3, 2, 2, rng);
    const auto y = up.forward(x);
    REQUIRE(y.h == 4);
    REQUIRE(y.w == 4);
    for (int b = 0; b < 2; ++b)
        for (int o = 0; o < 2; ++o)
            for (int oy = 0; oy < 4; ++oy)
                for (int ox = 0; ox < 4; ++ox) {
                    double want = up.bias.v[o];
                    for (int c = 0; c < 3; ++c)
                        want += x.at(b, c, oy / 2, ox / 2) * up.weight.at(c, o, oy % 2, ox % 2);
                    CHECK(y.at(b, o, oy, ox) == Catch::Approx(want).margin(1e-12));
                }
}

TEST_CASE("transposed conv gradients match finite differences", "[nn][grad]") {
    Rng rng(43);
    stmtk::nn::ConvTranspose2d<double> up(3, 2);
    up.init(rng);
    for (auto& b : up.bias.v) b = rng.normal() * 0.1;
    Tensor<double> x = random_tensor(2, 3, 2, 2, rng);
    Tensor<double> r = random_tensor(2, 2, 4, 4, rng);
    auto eval = [&]() { return dot(up.forward(x), r); };
    eval();
    up.gweight.zero();
    up.gbias.zero();
    const Tensor<double> dx = up.backward(r);
    const Tensor<double> gw = up.gweight, gb = up.gbias;
    require_close(compare_grads(eval, x, dx));
    require_close(compare_grads(eval, up.weight, gw));
    require_close(compare_grads(eval, up.bias, gb));
}

TEST_CASE("batch norm training forward matches direct statistics", "[nn]") {
    Rng rng(8);
    stmtk::nn::BatchNorm2d<double> bn(2);
    bn.gamma.v = {1.5, 0.7};
    bn.beta.v = {-0.25, 2.0};
    Tensor<double> x = random_tensor(2, 2, 3, 3, rng);
    const auto y = bn.forward(x, true);
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) mean += x.at(b, c, i, j);
        mean /= 18.0;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double d = x.at(b, c, i, j) - mean;
                    var += d * d;
                }
        var /= 18.0;
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double want =
                        bn.gamma.v[c] * (x.at(b, c, i, j) - mean) / std::sqrt(var + bn.eps) +
                        bn.beta.v[c];
                    CHECK(y.at(b, c, i, j) == Catch::Approx(want).margin(1e-12));
                }
        // Running stats fold in one momentum step from their 0/1 start.
        CHECK(bn.running_mean.v[c] == Catch::Approx(0.1 * mean).margin(1e-12));
        CHECK(bn.running_var.v[c] == Catch::Approx(0.9 + 0.1 * var).margin(1e-12));
    }
}

TEST_CASE("batch norm gradients match finite differences", "[nn][grad]") {
    Rng rng(44);
    stmtk::nn::BatchNorm2d<double> bn(3);
    for (auto& g : bn.gamma.v) g = 1.0 + 0.3 * rng.normal();
    for (auto& b : bn.beta.v) b = 0.2 * rng.normal();
    Tensor<double> x = random_tensor(2, 3, 4, 3, rng);
    Tensor<double> r = random_tensor(2, 3, 4, 3, rng);
    auto eval = [&]() { return dot(bn.forward(x, true), r); };
    eval();
    bn.ggamma.zero();
    bn.gbeta.zero();
    const Tensor<double> dx = bn.backward(r);
    const Tensor<double> gg = bn.ggamma, gb = bn.gbeta;
    require_close(compare_grads(eval, x, dx));
    require_close(compare_grads(eval, bn.gamma, gg));
    require_close(compare_grads(eval, bn.beta, gb));
}

TEST_CASE("relu composition gradients match finite differences", "[nn][grad]") {
    // conv -> batch norm -> relu, checked end to end.
    Rng rng(45);
    stmtk::nn::Conv2d<double> conv(2, 3, 3, 1, 1);
    conv.init(rng);
    stmtk::nn::BatchNorm2d<double> bn(3);
    stmtk::nn::ReLU<double> relu;
    Tensor<double> x = random_tensor(2, 2, 4, 4, rng);
    Tensor<double> r = random_tensor(2, 3, 4, 4, rng);
    auto eval = [&]() { return dot(relu.forward(bn.forward(conv.forward(x), true)), r); };
    eval();
    conv.gweight.zero();
    conv.gbias.zero();
    bn.ggamma.zero();
    bn.gbeta.zero();
    const Tensor<double> dx = conv.backward(bn.backward(relu.backward(r)));
    const Tensor<double> gw = conv.gweight;
    require_close(compare_grads(eval, x, dx));
    require_close(compare_grads(eval, conv.weight, gw));
}

TEST_CASE("concatenation gradients match finite differences", "[nn][grad]") {
    Rng rng(46);
    Tensor<double> a = random_tensor(2, 2, 3, 3, rng);
    Tensor<double> b = random_tensor(2, 3, 3, 3, rng);
    stmtk::nn::Conv2d<double> conv(5, 2, 3, 1, 1);
    conv.init(rng);
    Tensor<double> r = random_tensor(2, 2, 3, 3, rng);
    auto eval = [&]() {
        const auto cat = stmtk::nn::concat_channels<double>({&a, &b});
        return dot(conv.forward(cat), r);
    };
    eval();
    conv.gweight.zero();
    conv.gbias.zero();
    const Tensor<double> dcat = conv.backward(r);
    auto parts = stmtk::nn::split_channels(dcat, {2, 3});
    require_close(compare_grads(eval, a, parts[0]));
    require_close(compare_grads(eval, b, parts[1]));
}

TEST_CASE("weighted cross entropy matches direct evaluation", "[nn]") {
    // Uniform logits give loss log(2) regardless of the class weights.
    stmtk::nn::WeightedCrossEntropy<double> ce({1.0, 5.0});
    Tensor<double> logits(1, 2, 2, 2);
    std::vector<std::uint8_t> targets = {0, 1, 1, 0};
    CHECK(ce.forward(logits, targets) == Catch::Approx(std::log(2.0)).margin(1e-12));

    // Non-trivial case against a direct softmax evaluation.
    Rng rng(9);
    for (auto& v : logits.v) v = rng.normal();
    double num = 0.0, den = 0.0;
    std::size_t pix = 0;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x, ++pix) {
            const double l0 = logits.at(0, 0, y, x), l1 = logits.at(0, 1, y, x);
            const double t = targets[pix];
            const double lt = t == 0 ? l0 : l1;
            const double w = t == 0 ? 1.0 : 5.0;
            num += w * -(lt - std::log(std::exp(l0) + std::exp(l1)));
            den += w;
        }
    CHECK(ce.forward(logits, targets) == Catch::Approx(num / den).margin(1e-12));
}

TEST_CASE("cross entropy gradient matches finite differences", "[nn][grad]") {
    Rng rng(47);
    stmtk::nn::WeightedCrossEntropy<double> ce({1.0, 2.3});
    Tensor<double> logits = random_tensor(2, 2, 3, 3, rng);
    std::vector<std::uint8_t> targets(2 * 3 * 3);
    for (auto& t : targets) t = rng.uniform() < 0.5 ? 0 : 1;
    auto eval = [&]() { return ce.forward(logits, targets); };
    eval();
    const Tensor<double> dl = ce.backward();
    require_close(compare_grads(eval, logits, dl));
}

TEST_CASE("encoder block gradients match finite differences", "[nn][grad]") {
    Rng rng(48);
    stmtk::nn::EncoderBlock<double> block(2, 3, 2);
    block.init(rng);
    Tensor<double> x = random_tensor(2, 2, 4, 4, rng);
    Tensor<double> r = random_tensor(2, 3, 2, 2, rng);
    auto eval = [&]() { return dot(block.forward(x, true), r); };
    eval();
    std::vector<stmtk::nn::ParamRef<double>> refs;
    block.collect("block", refs);
    for (auto& p : refs)
        if (p.grad) p.grad->zero();
    const Tensor<double> dx = block.backward(r);
    require_close(compare_grads(eval, x, dx));
    for (auto& p : refs) {
        if (!p.grad) continue;
        INFO(p.name);
        const Tensor<double> g = *p.grad;
        require_close(compare_grads(eval, *p.value, g));
    }
}

TEST_CASE("identity shortcut is used when shape is preserved", "[nn]") {
    stmtk::nn::EncoderBlock<double> same(3, 3, 1);
    CHECK_FALSE(same.has_proj);
    stmtk::nn::EncoderBlock<double> wider(3, 4, 1);
    CHECK(wider.has_proj);
    stmtk::nn::EncoderBlock<double> strided(3, 3, 2);
    CHECK(strided.has_proj);
}

TEST_CASE("whole network gradients match finite differences", "[nn][grad]") {
    stmtk::nn::NetConfig cfg;
    cfg.levels = 2;
    cfg.channels = {2, 3};
    cfg.tile = 4;
    cfg.in_channels = 2;
    stmtk::nn::ResUNet<double> net(cfg);
    net.init_params(11);

    Rng rng(49);
    // Freshly initialized biases are all zero, which parks some transposed-conv
    // outputs exactly on the following ReLU kink where the analytic subgradient
    // and a central difference legitimately differ. Differentiate at a generic
    // point instead by jittering every trainable parameter.
    for (auto& p : net.params())
        if (p.grad)
            for (auto& v : p.value->v) v += 0.05 * rng.normal();

    Tensor<double> x = random_tensor(1, 2, 4, 4, rng);
    std::vector<std::uint8_t> targets(16);
    for (auto& t : targets) t = rng.uniform() < 0.5 ? 0 : 1;
    stmtk::nn::WeightedCrossEntropy<double> ce({1.0, 1.7});

    auto eval = [&]() { return ce.forward(net.forward(x, true), targets); };
    eval();
    net.zero_grad();
    const Tensor<double> dx = net.backward(ce.backward());
    require_close(compare_grads(eval, x, dx));

    auto refs = net.params();
    std::set<std::string> names;
    for (auto& p : refs) names.insert(p.name);
    CHECK(names.size() == refs.size());  // unique parameter names

    for (auto& p : refs) {
        if (!p.grad) continue;
        INFO(p.name);
        const Tensor<double> g = *p.grad;
        require_close(compare_grads(eval, *p.value, g));
    }
}

TEST_CASE("network output shape follows the input", "[nn]") {
    stmtk::nn::NetConfig cfg;
    cfg.levels = 2;
    cfg.channels = {2, 3};
    cfg.tile = 8;
    cfg.in_channels = 3;
    stmtk::nn::ResUNet<double> net(cfg);
    net.init_params(5);
    Rng rng(50);

    auto logits = net.forward(random_tensor(2, 3, 8, 8, rng), false);
    CHECK(logits.n == 2);
    CHECK(logits.c == 2);
    CHECK(logits.h == 8);
    CHECK(logits.w == 8);

    // Larger-than-tile inputs pass through as long as they stay divisible.
    logits = net.forward(random_tensor(1, 3, 16, 8, rng), false);
    CHECK(logits.h == 16);
    CHECK(logits.w == 8);

    CHECK_THROWS_AS(net.forward(random_tensor(1, 3, 6, 6, rng), false),
                    stmtk::ShapeMismatch);
    CHECK_THROWS_AS(net.forward(random_tensor(1, 2, 8, 8, rng), false),
                    stmtk::ShapeMismatch);
}

TEST_CASE("encoder halves and upsampler restores spatial dims", "[nn]") {
    Rng rng(51);
    stmtk::nn::EncoderBlock<double> enc(2, 3, 2);
    enc.init(rng);
    const auto down = enc.forward(random_tensor(1, 2, 4, 4, rng), true);
    CHECK(down.h == 2);
    CHECK(down.w == 2);

    stmtk::nn::ATUp<double> up(3, 2);
    up.init(rng);
    const auto restored = up.forward(down);
    CHECK(restored.h == 4);
    CHECK(restored.w == 4);
}

TEST_CASE("seeded construction is bit deterministic", "[nn]") {
    stmtk::nn::NetConfig cfg;
    cfg.levels = 2;
    cfg.channels = {2, 3};
    cfg.tile = 4;
    cfg.in_channels = 2;
    stmtk::nn::ResUNet<double> a(cfg), b(cfg);
    a.init_params(123);
    b.init_params(123);
    auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].name == pb[i].name);
        REQUIRE(pa[i].value->v == pb[i].value->v);
    }

    Rng rng(52);
    const Tensor<double> x = random_tensor(1, 2, 4, 4, rng);
    const auto la = a.forward(x, false);
    const auto lb = b.forward(x, false);
    CHECK(la.v == lb.v);

    stmtk::nn::ResUNet<double> c(cfg);
    c.init_params(124);
    bool differs = false;
    auto pc = c.params();
    for (std::size_t i = 0; i < pa.size() && !differs; ++i)
        differs = pa[i].value->v != pc[i].value->v;
    CHECK(differs);
}

TEST_CASE("invalid network configurations are rejected", "[nn]") {
    using stmtk::nn::NetConfig;
    auto cfg = NetConfig{};
    cfg.validate();  // defaults are fine

    NetConfig one = cfg;
    one.levels = 1;
    one.channels = {8};
    CHECK_THROWS_AS(one.validate(), stmtk::InvalidArgument);

    NetConfig flat = cfg;
    flat.channels = {8, 8, 32};
    CHECK_THROWS_AS(flat.validate(), stmtk::InvalidArgument);

    NetConfig odd = cfg;
    odd.tile = 60;  // not divisible by 2^3
    CHECK_THROWS_AS(odd.validate(), stmtk::InvalidArgument);

    NetConfig mismatch = cfg;
    mismatch.channels = {8, 16};
    CHECK_THROWS_AS(mismatch.validate(), stmtk::InvalidArgument);
}
