// Trainer, optimizer, checkpoint, and tiled-inference behavior.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "stmtk/dataset.hpp"
#include "stmtk/nn/checkpoint.hpp"
#include "stmtk/nn/train.hpp"
#include "stmtk/rng.hpp"

using stmtk::Image8;
using stmtk::LabeledDataset;
using stmtk::Rng;
using stmtk::SegMask;
using stmtk::Split;
namespace nn = stmtk::nn;

namespace {

// A learnable tile: bright where the mask is 1, dark elsewhere, plus noise.
stmtk::TilePair separable_tile(int tile, Rng& rng) {
    stmtk::TilePair p;
    p.image = Image8(tile, tile, 3);
    p.mask = SegMask(tile, tile, stmtk::MaskSource::synthetic_truth);
    for (int r = 0; r < tile; ++r)
        for (int c = 0; c < tile; ++c) {
            const bool fg = c >= tile / 2;
            p.mask.at(r, c) = fg ? 1 : 0;
            const double base = fg ? 200.0 : 60.0;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = base + rng.normal() * 8.0;
                p.image.at(r, c, ch) =
                    static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    return p;
}

LabeledDataset tiny_dataset(int tile, int n_train, int n_val, std::uint64_t seed) {
    LabeledDataset ds;
    ds.tile = tile;
    ds.seed = seed;
    Rng rng(seed);
    for (int i = 0; i < n_train + n_val; ++i) {
        ds.pairs.push_back(separable_tile(tile, rng));
        ds.split.push_back(i < n_train ? Split::train : Split::validation);
    }
    return ds;
}

nn::NetConfig tiny_config(int tile) {
    nn::NetConfig cfg;
    cfg.levels = 2;
    cfg.channels = {4, 8};
    cfg.tile = tile;
    cfg.in_channels = 3;
    cfg.batch_size = 2;
    return cfg;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("momentum update follows the velocity recurrence", "[train]") {
    nn::Tensor<double> value(1, 1, 1, 1), grad(1, 1, 1, 1);
    value.v[0] = 1.0;
    grad.v[0] = 0.5;
    std::vector<nn::ParamRef<double>> refs = {{"p", &value, &grad, true}};
    nn::SgdMomentum<double> opt;
    opt.lr = 0.1;
    opt.mu = 0.9;
    opt.step(refs);  // v = -0.05, theta = 0.95
    CHECK(value.v[0] == Catch::Approx(0.95).margin(1e-15));
    opt.step(refs);  // v = 0.9*-0.05 - 0.05 = -0.095, theta = 0.855
    CHECK(value.v[0] == Catch::Approx(0.855).margin(1e-15));
}

TEST_CASE("zero learning rate leaves parameters untouched", "[train]") {
    auto cfg = tiny_config(8);
    cfg.learning_rate = 0.0;
    cfg.max_epochs = 3;
    nn::ResUNet<float> net(cfg);
    net.init_params(3);
    std::vector<std::vector<float>> before;
    for (auto& p : net.params()) before.push_back(p.value->v);

    auto ds = tiny_dataset(8, 4, 0, 77);
    const auto result = nn::train(net, ds);
    REQUIRE(result.history.size() == 3);

    auto params = net.params();
    std::size_t i = 0;
    for (auto& p : params) {
        if (p.trainable) CHECK(p.value->v == before[i]);
        ++i;
    }
}

TEST_CASE("single tile overfits below a tenth of initial loss", "[train]") {
    auto cfg = tiny_config(16);
    cfg.learning_rate = 0.01;
    cfg.batch_size = 1;
    cfg.max_epochs = 200;
    cfg.seed = 5;
    nn::ResUNet<float> net(cfg);
    net.init_params(cfg.seed);

    LabeledDataset ds;
    ds.tile = 16;
    Rng rng(9);
    ds.pairs.push_back(separable_tile(16, rng));
    ds.split.push_back(Split::train);

    const auto result = nn::train(net, ds);
    REQUIRE(result.history.size() == 200);
    const double first = result.history.front().train_loss;
    const double last = result.history.back().train_loss;
    INFO("first " << first << " last " << last);
    CHECK(last < 0.1 * first);
}

TEST_CASE("training histories are bit identical for a fixed seed", "[train]") {
    auto cfg = tiny_config(8);
    cfg.max_epochs = 4;
    cfg.learning_rate = 0.02;
    cfg.seed = 21;
    auto ds = tiny_dataset(8, 5, 2, 33);

    auto run = [&]() {
        nn::ResUNet<float> net(cfg);
        net.init_params(cfg.seed);
        return nn::train(net, ds);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_loss == b.history[i].val_loss);
        CHECK(a.history[i].val_iou == b.history[i].val_iou);
    }

    const auto pa = temp_path("stmtk_hist_a.csv"), pb = temp_path("stmtk_hist_b.csv");
    nn::write_history_csv(pa, a.history);
    nn::write_history_csv(pb, b.history);
    std::ifstream fa(pa), fb(pb);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().rfind("epoch,train_loss,val_loss,val_iou\n", 0) == 0);
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST_CASE("validation metrics are recorded when a val split exists", "[train]") {
    auto cfg = tiny_config(8);
    cfg.max_epochs = 2;
    cfg.learning_rate = 0.02;
    auto ds = tiny_dataset(8, 4, 2, 13);
    nn::ResUNet<float> net(cfg);
    net.init_params(1);
    const auto result = nn::train(net, ds);
    for (const auto& e : result.history) {
        CHECK(std::isfinite(e.val_loss));
        CHECK(e.val_iou >= 0.0);
        CHECK(e.val_iou <= 1.0);
    }
    // Auto weights: both classes present in equal amounts -> both near 1.
    REQUIRE(result.class_weights.size() == 2);
    CHECK(result.class_weights[0] == Catch::Approx(1.0));
    CHECK(result.class_weights[1] == Catch::Approx(1.0));
}

TEST_CASE("inverse frequency weights match a hand count", "[train]") {
    LabeledDataset ds;
    ds.tile = 2;
    stmtk::TilePair a;
    a.image = Image8(2, 2, 1);
    a.mask = SegMask(2, 2);
    a.mask.at(0, 0) = 1;
    stmtk::TilePair b = a;
    b.mask.at(1, 1) = 1;  // now 2 ones in b, 1 in a
    b.mask.at(0, 0) = 1;
    ds.pairs = {a, b};
    ds.split = {Split::train, Split::train};
    // counts: ones = 3, zeros = 5, total = 8
    const auto w = nn::inverse_frequency_weights(ds, 2);
    CHECK(w[0] == Catch::Approx(8.0 / (2.0 * 5.0)));
    CHECK(w[1] == Catch::Approx(8.0 / (2.0 * 3.0)));
}

TEST_CASE("non-finite loss aborts training", "[train]") {
    // Batch norm re-normalizes away even absurd learning rates, so force the
    // condition directly: one poisoned weight makes the first loss NaN.
    auto cfg = tiny_config(8);
    cfg.max_epochs = 5;
    auto ds = tiny_dataset(8, 4, 0, 55);
    nn::ResUNet<float> net(cfg);
    net.init_params(2);
    auto params = net.params();
    params.back().value->v[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(nn::train(net, ds), stmtk::DivergenceDetected);
}

TEST_CASE("eval forward is batch independent and deterministic", "[train]") {
    auto cfg = tiny_config(8);
    nn::ResUNet<float> net(cfg);
    net.init_params(17);
    Rng rng(4);
    nn::Tensor<float> one(1, 3, 8, 8), two(2, 3, 8, 8);
    for (std::size_t i = 0; i < one.v.size(); ++i) {
        one.v[i] = static_cast<float>(rng.uniform());
        two.v[i] = one.v[i];
        two.v[one.v.size() + i] = one.v[i];  // duplicate the same image
    }
    const auto la = net.forward(one, false);
    const auto lb = net.forward(two, false);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                CHECK(lb.at(0, c, y, x) == la.at(0, c, y, x));
                CHECK(lb.at(1, c, y, x) == la.at(0, c, y, x));
            }
}

TEST_CASE("stride one conv is translation equivariant on periodic input", "[train]") {
    // Circularly shifting a spatially periodic input by one column shifts the
    // output by one column away from the zero-padded borders.
    Rng rng(6);
    stmtk::nn::Conv2d<double> conv(1, 2, 3, 1, 1);
    conv.init(rng);
    const int w = 8, period = 4;
    std::vector<double> pattern(period);
    for (auto& p : pattern) p = rng.normal();
    nn::Tensor<double> x(1, 1, 4, w), xs(1, 1, 4, w);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < w; ++c) {
            x.at(0, 0, r, c) = pattern[c % period] + 0.1 * r;
            xs.at(0, 0, r, c) = pattern[(c + period - 1) % period] + 0.1 * r;
        }
    const auto y = conv.forward(x);
    const auto ys = conv.forward(xs);
    for (int o = 0; o < 2; ++o)
        for (int r = 0; r < 4; ++r)
            for (int c = 2; c < w - 2; ++c)
                CHECK(ys.at(0, o, r, c) == Catch::Approx(y.at(0, o, r, c - 1)).margin(1e-12));
}

TEST_CASE("segmenting a map of exactly one tile equals direct forward", "[train]") {
    auto cfg = tiny_config(8);
    nn::ResUNet<float> net(cfg);
    net.init_params(23);
    Rng rng(12);
    Image8 map(8, 8, 3);
    for (auto& v : map.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));

    const SegMask via_segment = nn::segment(net, map);
    REQUIRE(via_segment.source == stmtk::MaskSource::predicted);

    nn::Tensor<float> x(1, 3, 8, 8);
    nn::fill_input(x, 0, map, 3);
    const auto logits = net.forward(x, false);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const int want = logits.at(0, 1, r, c) > logits.at(0, 0, r, c) ? 1 : 0;
            CHECK(via_segment.at(r, c) == want);
        }
}

TEST_CASE("segmentation covers maps larger and smaller than the tile", "[train]") {
    auto cfg = tiny_config(8);
    nn::ResUNet<float> net(cfg);
    net.init_params(29);
    Rng rng(13);

    Image8 big(20, 37, 3);
    for (auto& v : big.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const SegMask wide = nn::segment(net, big);
    CHECK(wide.rows == 20);
    CHECK(wide.cols == 37);
    const SegMask again = nn::segment(net, big);
    CHECK(wide.labels == again.labels);

    Image8 small(5, 6, 3);
    for (auto& v : small.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const SegMask tiny = nn::segment(net, small);
    CHECK(tiny.rows == 5);
    CHECK(tiny.cols == 6);
}

TEST_CASE("checkpoint round trip restores config and behavior", "[train]") {
    auto cfg = tiny_config(8);
    cfg.max_epochs = 1;
    cfg.learning_rate = 0.02;
    cfg.class_weights = {0.8, 1.9};
    auto ds = tiny_dataset(8, 3, 0, 88);
    nn::ResUNet<float> net(cfg);
    net.init_params(31);
    nn::train(net, ds);  // make running stats non-trivial

    const auto path = temp_path("stmtk_ckpt.runp");
    nn::write_checkpoint(path, nn::snapshot(net));

    const auto ck = nn::read_checkpoint(path);
    CHECK(ck.config.levels == cfg.levels);
    CHECK(ck.config.channels == cfg.channels);
    CHECK(ck.config.tile == cfg.tile);
    CHECK(ck.config.learning_rate == cfg.learning_rate);
    CHECK(ck.config.momentum == cfg.momentum);
    CHECK(ck.config.class_weights == cfg.class_weights);

    auto restored = nn::net_from_checkpoint<float>(ck);
    Rng rng(14);
    nn::Tensor<float> x(1, 3, 8, 8);
    for (auto& v : x.v) v = static_cast<float>(rng.uniform());
    const auto la = net.forward(x, false);
    const auto lb = restored.forward(x, false);
    CHECK(la.v == lb.v);  // float32 params round-trip losslessly
    std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected", "[train]") {
    const auto path = temp_path("stmtk_ckpt_bad.runp");
    {
        std::ofstream f(path, std::ios::binary);
        f << "JUNKJUNKJUNK";
    }
    CHECK_THROWS_AS(nn::read_checkpoint(path), stmtk::ParseError);

    // Valid header, truncated blob data.
    auto cfg = tiny_config(8);
    nn::ResUNet<float> net(cfg);
    net.init_params(3);
    nn::write_checkpoint(path, nn::snapshot(net));
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full_size / 2);
    CHECK_THROWS_AS(nn::read_checkpoint(path), stmtk::ParseError);

    // Blob set mismatch against a different architecture.
    nn::write_checkpoint(path, nn::snapshot(net));
    auto ck = nn::read_checkpoint(path);
    ck.blobs.pop_back();
    nn::ResUNet<float> other(cfg);
    CHECK_THROWS_AS(nn::apply_checkpoint(other, ck), stmtk::ParseError);
    std::remove(path.c_str());
}

TEST_CASE("training rejects unusable datasets", "[train]") {
    auto cfg = tiny_config(8);
    nn::ResUNet<float> net(cfg);
    net.init_params(1);

    LabeledDataset empty;
    empty.tile = 8;
    CHECK_THROWS_AS(nn::train(net, empty), stmtk::EmptyInput);

    auto wrong = tiny_dataset(16, 2, 0, 1);  // tiles larger than the net tile
    CHECK_THROWS_AS(nn::train(net, wrong), stmtk::ShapeMismatch);
}
