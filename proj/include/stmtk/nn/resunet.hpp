#ifndef STMTK_NN_RESUNET_HPP
#define STMTK_NN_RESUNET_HPP

// Residual U-shaped segmentation network with dense cross-level decoding.
//
// Encoder level i (1-based) is a double-residual block at 1/2^(i-1) scale;
// levels after the first downsample by stride 2 in their first convolution.
// A bridge below the deepest level halves the scale once more. Each decoder
// level fuses a processed skip from its encoder level with upsampled copies
// of every deeper decoder output and of the bridge, so shallow levels see
// all coarser context directly rather than only through the previous level.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stmtk/nn/layers.hpp"

namespace stmtk::nn {

struct NetConfig {
    int levels = 3;
    std::vector<int> channels = {8, 16, 32};
    int tile = 64;
    int classes = 2;
    int in_channels = 3;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int batch_size = 3;
    int max_epochs = 10;
    std::vector<double> class_weights;  // empty = inverse frequency of the training split
    std::uint64_t seed = 1;

    void validate() const {
        if (levels < 2) throw InvalidArgument("need at least two levels");
        if (static_cast<int>(channels.size()) != levels)
            throw InvalidArgument("one channel width per level required");
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (channels[i] <= 0) throw InvalidArgument("channel widths must be positive");
            if (i > 0 && channels[i] <= channels[i - 1])
                throw InvalidArgument("channel widths must strictly increase with depth");
        }
        if (classes < 2) throw InvalidArgument("need at least two classes");
        if (in_channels < 1) throw InvalidArgument("need at least one input channel");
        const int down = 1 << levels;
        if (tile <= 0 || tile % down != 0)
            throw InvalidArgument("tile must be a positive multiple of 2^levels");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw InvalidArgument("learning rate must be finite and non-negative");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw InvalidArgument("momentum must lie in [0, 1)");
        if (batch_size < 1) throw InvalidArgument("batch size must be positive");
        if (max_epochs < 0) throw InvalidArgument("epoch count cannot be negative");
        if (!class_weights.empty()) {
            if (static_cast<int>(class_weights.size()) != classes)
                throw InvalidArgument("need one class weight per class");
            for (const double w : class_weights)
                if (!(w > 0.0) || !std::isfinite(w))
                    throw InvalidArgument("class weights must be finite and positive");
        }
    }
};

// conv3x3 + ReLU
template <typename T>
struct AConv {
    Conv2d<T> conv;
    ReLU<T> relu;

    AConv() = default;
    AConv(int ic, int oc) : conv(ic, oc, 3, 1, 1) {}

    void init(Rng& rng) { conv.init(rng); }
    Tensor<T> forward(const Tensor<T>& x) { return relu.forward(conv.forward(x)); }
    Tensor<T> backward(const Tensor<T>& dy) { return conv.backward(relu.backward(dy)); }
    void collect(const std::string& p, std::vector<ParamRef<T>>& out) { conv.collect(p + ".conv", out); }
};

// 2x2 stride-2 transposed conv + ReLU: one spatial doubling.
template <typename T>
struct ATUp {
    ConvTranspose2d<T> up;
    ReLU<T> relu;

    ATUp() = default;
    ATUp(int ic, int oc) : up(ic, oc) {}

    void init(Rng& rng) { up.init(rng); }
    Tensor<T> forward(const Tensor<T>& x) { return relu.forward(up.forward(x)); }
    Tensor<T> backward(const Tensor<T>& dy) { return up.backward(relu.backward(dy)); }
    void collect(const std::string& p, std::vector<ParamRef<T>>& out) { up.collect(p + ".up", out); }
};

// Sequence of ATUp stages covering a fixed scale gap.
template <typename T>
struct UpChain {
    std::vector<ATUp<T>> stages;

    void init(Rng& rng) {
        for (auto& s : stages) s.init(rng);
    }
    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> cur = x;
        for (auto& s : stages) cur = s.forward(cur);
        return cur;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> cur = dy;
        for (auto it = stages.rbegin(); it != stages.rend(); ++it) cur = it->backward(cur);
        return cur;
    }
    void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
        for (std::size_t s = 0; s < stages.size(); ++s)
            stages[s].collect(p + ".up" + std::to_string(s + 1), out);
    }
};

// Two conv3x3+ReLU stages fusing a channel concatenation back to `oc`.
template <typename T>
struct FusePair {
    Conv2d<T> conv1, conv2;
    ReLU<T> relu1, relu2;

    FusePair() = default;
    FusePair(int ic, int oc) : conv1(ic, oc, 3, 1, 1), conv2(oc, oc, 3, 1, 1) {}

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
    }
    Tensor<T> forward(const Tensor<T>& x) {
        return relu2.forward(conv2.forward(relu1.forward(conv1.forward(x))));
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        return conv1.backward(relu1.backward(conv2.backward(relu2.backward(dy))));
    }
    void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
        conv1.collect(p + ".conv1", out);
        conv2.collect(p + ".conv2", out);
    }
};

// Double-residual encoder block:
//   h_low = ReLU(identity(x) + F1a(x))
//   out   = ReLU(F2(h_low) + F1b(h_low))
// where F1* = BN(conv3(ReLU(BN(conv3(.))))) and F2 = BN(conv3(.)).
// The identity path becomes a strided 1x1 conv + BN projection whenever the
// block changes channel count or resolution.
template <typename T>
struct EncoderBlock {
    bool has_proj = false;
    Conv2d<T> conv_a1, conv_a2, conv_b1, conv_b2, conv_c, proj_conv;
    BatchNorm2d<T> bn_a1, bn_a2, bn_b1, bn_b2, bn_c, proj_bn;
    ReLU<T> relu_a, relu_l, relu_b, relu_out;

    EncoderBlock() = default;
    EncoderBlock(int ic, int oc, int stride)
        : has_proj(ic != oc || stride != 1),
          conv_a1(ic, oc, 3, stride, 1), conv_a2(oc, oc, 3, 1, 1),
          conv_b1(oc, oc, 3, 1, 1), conv_b2(oc, oc, 3, 1, 1),
          conv_c(oc, oc, 3, 1, 1),
          proj_conv(ic, oc, 1, stride, 0),
          bn_a1(oc), bn_a2(oc), bn_b1(oc), bn_b2(oc), bn_c(oc), proj_bn(oc) {}

    void init(Rng& rng) {
        conv_a1.init(rng);
        conv_a2.init(rng);
        conv_b1.init(rng);
        conv_b2.init(rng);
        conv_c.init(rng);
        if (has_proj) proj_conv.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> f1a = bn_a2.forward(
            conv_a2.forward(relu_a.forward(bn_a1.forward(conv_a1.forward(x), training))),
            training);
        Tensor<T> idp =
            has_proj ? proj_bn.forward(proj_conv.forward(x), training) : x;
        Tensor<T> h_low = relu_l.forward(add(f1a, idp));
        Tensor<T> f1b = bn_b2.forward(
            conv_b2.forward(relu_b.forward(bn_b1.forward(conv_b1.forward(h_low), training))),
            training);
        Tensor<T> f2 = bn_c.forward(conv_c.forward(h_low), training);
        return relu_out.forward(add(f2, f1b));
    }

    Tensor<T> backward(const Tensor<T>& dout) {
        Tensor<T> d = relu_out.backward(dout);
        Tensor<T> dh = conv_c.backward(bn_c.backward(d));
        dh += conv_b1.backward(
            bn_b1.backward(relu_b.backward(conv_b2.backward(bn_b2.backward(d)))));
        Tensor<T> dsum = relu_l.backward(dh);
        Tensor<T> dx = conv_a1.backward(
            bn_a1.backward(relu_a.backward(conv_a2.backward(bn_a2.backward(dsum)))));
        if (has_proj)
            dx += proj_conv.backward(proj_bn.backward(dsum));
        else
            dx += dsum;
        return dx;
    }

    void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
        conv_a1.collect(p + ".f1a.conv1", out);
        bn_a1.collect(p + ".f1a.bn1", out);
        conv_a2.collect(p + ".f1a.conv2", out);
        bn_a2.collect(p + ".f1a.bn2", out);
        if (has_proj) {
            proj_conv.collect(p + ".proj.conv", out);
            proj_bn.collect(p + ".proj.bn", out);
        }
        conv_b1.collect(p + ".f1b.conv1", out);
        bn_b1.collect(p + ".f1b.bn1", out);
        conv_b2.collect(p + ".f1b.conv2", out);
        bn_b2.collect(p + ".f1b.bn2", out);
        conv_c.collect(p + ".f2.conv", out);
        bn_c.collect(p + ".f2.bn", out);
    }
};

// Bridge below the deepest encoder level: one more stride-2 halving and a
// channel doubling, plain conv+ReLU.
template <typename T>
struct Bridge {
    Conv2d<T> conv1, conv2;
    ReLU<T> relu1, relu2;

    Bridge() = default;
    explicit Bridge(int ic)
        : conv1(ic, 2 * ic, 3, 2, 1), conv2(2 * ic, 2 * ic, 3, 1, 1) {}

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
    }
    Tensor<T> forward(const Tensor<T>& x) {
        return relu2.forward(conv2.forward(relu1.forward(conv1.forward(x))));
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        return conv1.backward(relu1.backward(conv2.backward(relu2.backward(dy))));
    }
    void collect(const std::string& p, std::vector<ParamRef<T>>& out) {
        conv1.collect(p + ".conv1", out);
        conv2.collect(p + ".conv2", out);
    }
};

template <typename T>
class ResUNet {
public:
    explicit ResUNet(const NetConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const int L = cfg_.levels;
        const auto& ch = cfg_.channels;
        for (int li = 0; li < L; ++li)
            enc_.emplace_back(li == 0 ? cfg_.in_channels : ch[li - 1], ch[li],
                              li == 0 ? 1 : 2);
        bridge_ = Bridge<T>(ch[L - 1]);
        for (int li = 0; li + 1 < L; ++li) skip_.emplace_back(ch[li], ch[li]);
        de_chains_.resize(L);
        bridge_chains_.resize(L);
        for (int li = 0; li < L; ++li) {
            for (int lj = li + 1; lj < L; ++lj) {
                UpChain<T> c;
                c.stages.emplace_back(ch[lj], ch[li]);
                for (int s = 1; s < lj - li; ++s) c.stages.emplace_back(ch[li], ch[li]);
                de_chains_[li].push_back(std::move(c));
            }
            UpChain<T> bc;
            bc.stages.emplace_back(2 * ch[L - 1], ch[li]);
            for (int s = 1; s < L - li; ++s) bc.stages.emplace_back(ch[li], ch[li]);
            bridge_chains_[li] = std::move(bc);
            fuse_.emplace_back(ch[li] * (L - li + 1), ch[li]);
        }
        head_ = Conv2d<T>(ch[0], cfg_.classes, 1, 1, 0);
    }

    const NetConfig& config() const { return cfg_; }

    // He-normal conv weights, zero biases, identity batch norms, in a fixed
    // traversal order so a seed pins every parameter.
    void init_params(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& e : enc_) e.init(rng);
        bridge_.init(rng);
        for (auto& s : skip_) s.init(rng);
        for (auto& per_level : de_chains_)
            for (auto& c : per_level) c.init(rng);
        for (auto& c : bridge_chains_) c.init(rng);
        for (auto& f : fuse_) f.init(rng);
        head_.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.c != cfg_.in_channels) throw ShapeMismatch("input channel mismatch");
        const int down = 1 << cfg_.levels;
        if (x.h % down != 0 || x.w % down != 0)
            throw ShapeMismatch("input spatial dims must be multiples of 2^levels");
        const int L = cfg_.levels;
        enc_out_.assign(L, Tensor<T>());
        Tensor<T> cur = x;
        for (int li = 0; li < L; ++li) {
            cur = enc_[li].forward(cur, training);
            enc_out_[li] = cur;
        }
        bridge_out_ = bridge_.forward(enc_out_[L - 1]);
        de_out_.assign(L, Tensor<T>());
        for (int li = L - 1; li >= 0; --li) {
            std::vector<Tensor<T>> parts;
            if (li == L - 1)
                parts.push_back(enc_out_[li]);
            else
                parts.push_back(skip_[li].forward(enc_out_[li]));
            for (int lj = li + 1; lj < L; ++lj)
                parts.push_back(de_chains_[li][lj - li - 1].forward(de_out_[lj]));
            parts.push_back(bridge_chains_[li].forward(bridge_out_));
            std::vector<const Tensor<T>*> ptrs;
            for (const auto& p : parts) ptrs.push_back(&p);
            de_out_[li] = fuse_[li].forward(concat_channels(ptrs));
        }
        return head_.forward(de_out_[0]);
    }

    // Input gradient is returned for completeness; training only needs the
    // parameter gradients this accumulates.
    Tensor<T> backward(const Tensor<T>& dlogits) {
        const int L = cfg_.levels;
        std::vector<Tensor<T>> d_de(L), d_enc(L);
        for (int li = 0; li < L; ++li) {
            d_de[li] = zeros_like(de_out_[li]);
            d_enc[li] = zeros_like(enc_out_[li]);
        }
        Tensor<T> d_bridge = zeros_like(bridge_out_);
        d_de[0] += head_.backward(dlogits);
        for (int li = 0; li < L; ++li) {
            Tensor<T> dcat = fuse_[li].backward(d_de[li]);
            std::vector<int> sizes(L - li + 1, cfg_.channels[li]);
            auto parts = split_channels(dcat, sizes);
            if (li == L - 1)
                d_enc[li] += parts[0];
            else
                d_enc[li] += skip_[li].backward(parts[0]);
            for (int lj = li + 1; lj < L; ++lj)
                d_de[lj] += de_chains_[li][lj - li - 1].backward(parts[lj - li]);
            d_bridge += bridge_chains_[li].backward(parts.back());
        }
        d_enc[L - 1] += bridge_.backward(d_bridge);
        for (int li = L - 1; li >= 0; --li) {
            Tensor<T> dprev = enc_[li].backward(d_enc[li]);
            if (li == 0) return dprev;
            d_enc[li - 1] += dprev;
        }
        return Tensor<T>();  // unreachable
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        const int L = cfg_.levels;
        for (int li = 0; li < L; ++li)
            enc_[li].collect("enc" + std::to_string(li + 1), out);
        bridge_.collect("bridge", out);
        for (int li = 0; li + 1 < L; ++li)
            skip_[li].collect("de" + std::to_string(li + 1) + ".skip", out);
        for (int li = 0; li < L; ++li) {
            const std::string base = "de" + std::to_string(li + 1);
            for (int lj = li + 1; lj < L; ++lj)
                de_chains_[li][lj - li - 1].collect(
                    base + ".from_de" + std::to_string(lj + 1), out);
            bridge_chains_[li].collect(base + ".from_bridge", out);
            fuse_[li].collect(base + ".fuse", out);
        }
        head_.collect("head", out);
        return out;
    }

    void zero_grad() {
        for (auto& p : params())
            if (p.grad) p.grad->zero();
    }

private:
    NetConfig cfg_;
    std::vector<EncoderBlock<T>> enc_;
    Bridge<T> bridge_;
    std::vector<AConv<T>> skip_;
    std::vector<std::vector<UpChain<T>>> de_chains_;
    std::vector<UpChain<T>> bridge_chains_;
    std::vector<FusePair<T>> fuse_;
    Conv2d<T> head_;

    std::vector<Tensor<T>> enc_out_, de_out_;
    Tensor<T> bridge_out_;
};

}  // namespace stmtk::nn

#endif
