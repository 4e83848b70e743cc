#ifndef STMTK_NN_LAYERS_HPP
#define STMTK_NN_LAYERS_HPP

// Layers used by the segmentation network. Every layer caches what its
// backward pass needs; backward returns the input gradient and accumulates
// parameter gradients (callers zero them between steps).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stmtk/nn/tensor.hpp"
#include "stmtk/rng.hpp"

namespace stmtk::nn {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;  // null for non-trainable buffers
    bool trainable = true;
};

template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Tensor<T> weight, bias, gweight, gbias;
    Tensor<T> x_;  // cached input

    Conv2d() = default;
    Conv2d(int ic, int oc, int k, int s, int p)
        : in_ch(ic), out_ch(oc), ksize(k), stride(s), pad(p),
          weight(oc, ic, k, k), bias(1, oc, 1, 1),
          gweight(oc, ic, k, k), gbias(1, oc, 1, 1) {}

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
        for (auto& w : weight.v) w = static_cast<T>(rng.normal() * std);
        bias.zero();
    }

    int out_dim(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != in_ch) throw ShapeMismatch("conv input channel mismatch");
        x_ = x;
        Tensor<T> y(x.n, out_ch, out_dim(x.h), out_dim(x.w));
        for (int b = 0; b < x.n; ++b)
            for (int o = 0; o < out_ch; ++o)
                for (int oy = 0; oy < y.h; ++oy)
                    for (int ox = 0; ox < y.w; ++ox) {
                        T acc = bias.v[o];
                        for (int i = 0; i < in_ch; ++i)
                            for (int ky = 0; ky < ksize; ++ky) {
                                const int sy = oy * stride + ky - pad;
                                if (sy < 0 || sy >= x.h) continue;
                                for (int kx = 0; kx < ksize; ++kx) {
                                    const int sx = ox * stride + kx - pad;
                                    if (sx < 0 || sx >= x.w) continue;
                                    acc += weight.at(o, i, ky, kx) * x.at(b, i, sy, sx);
                                }
                            }
                        y.at(b, o, oy, ox) = acc;
                    }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = zeros_like(x_);
        for (int b = 0; b < dy.n; ++b)
            for (int o = 0; o < out_ch; ++o)
                for (int oy = 0; oy < dy.h; ++oy)
                    for (int ox = 0; ox < dy.w; ++ox) {
                        const T g = dy.at(b, o, oy, ox);
                        gbias.v[o] += g;
                        for (int i = 0; i < in_ch; ++i)
                            for (int ky = 0; ky < ksize; ++ky) {
                                const int sy = oy * stride + ky - pad;
                                if (sy < 0 || sy >= x_.h) continue;
                                for (int kx = 0; kx < ksize; ++kx) {
                                    const int sx = ox * stride + kx - pad;
                                    if (sx < 0 || sx >= x_.w) continue;
                                    gweight.at(o, i, ky, kx) += g * x_.at(b, i, sy, sx);
                                    dx.at(b, i, sy, sx) += g * weight.at(o, i, ky, kx);
                                }
                            }
                    }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &weight, &gweight, true});
        out.push_back({prefix + ".bias", &bias, &gbias, true});
    }
};

// 2x2 kernel, stride 2: exact spatial doubling.
template <typename T>
struct ConvTranspose2d {
    int in_ch = 0, out_ch = 0;
    Tensor<T> weight, bias, gweight, gbias;  // weight is (in_ch, out_ch, 2, 2)
    Tensor<T> x_;

    ConvTranspose2d() = default;
    ConvTranspose2d(int ic, int oc)
        : in_ch(ic), out_ch(oc),
          weight(ic, oc, 2, 2), bias(1, oc, 1, 1),
          gweight(ic, oc, 2, 2), gbias(1, oc, 1, 1) {}

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * 4));
        for (auto& w : weight.v) w = static_cast<T>(rng.normal() * std);
        bias.zero();
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != in_ch) throw ShapeMismatch("tconv input channel mismatch");
        x_ = x;
        Tensor<T> y(x.n, out_ch, x.h * 2, x.w * 2);
        for (int b = 0; b < x.n; ++b) {
            for (int o = 0; o < out_ch; ++o)
                for (std::size_t i = 0; i < static_cast<std::size_t>(y.h) * y.w; ++i)
                    y.v[y.index(b, o, 0, 0) + i] = bias.v[o];
            for (int i = 0; i < in_ch; ++i)
                for (int sy = 0; sy < x.h; ++sy)
                    for (int sx = 0; sx < x.w; ++sx) {
                        const T xv = x.at(b, i, sy, sx);
                        for (int o = 0; o < out_ch; ++o)
                            for (int ky = 0; ky < 2; ++ky)
                                for (int kx = 0; kx < 2; ++kx)
                                    y.at(b, o, 2 * sy + ky, 2 * sx + kx) +=
                                        xv * weight.at(i, o, ky, kx);
                    }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = zeros_like(x_);
        for (int b = 0; b < dy.n; ++b) {
            for (int o = 0; o < out_ch; ++o)
                for (int y = 0; y < dy.h; ++y)
                    for (int x = 0; x < dy.w; ++x) gbias.v[o] += dy.at(b, o, y, x);
            for (int i = 0; i < in_ch; ++i)
                for (int sy = 0; sy < x_.h; ++sy)
                    for (int sx = 0; sx < x_.w; ++sx) {
                        T acc = T(0);
                        for (int o = 0; o < out_ch; ++o)
                            for (int ky = 0; ky < 2; ++ky)
                                for (int kx = 0; kx < 2; ++kx) {
                                    const T g = dy.at(b, o, 2 * sy + ky, 2 * sx + kx);
                                    acc += g * weight.at(i, o, ky, kx);
                                    gweight.at(i, o, ky, kx) += g * x_.at(b, i, sy, sx);
                                }
                        dx.at(b, i, sy, sx) += acc;
                    }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &weight, &gweight, true});
        out.push_back({prefix + ".bias", &bias, &gbias, true});
    }
};

// Per-channel batch norm. Training mode normalizes by biased batch statistics
// and folds them into running averages; eval mode uses the running averages.
template <typename T>
struct BatchNorm2d {
    int ch = 0;
    double eps = 1e-5, momentum = 0.1;
    Tensor<T> gamma, beta, ggamma, gbeta;
    Tensor<T> running_mean, running_var;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
    bool trained_forward_ = false;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int c)
        : ch(c), gamma(1, c, 1, 1), beta(1, c, 1, 1), ggamma(1, c, 1, 1), gbeta(1, c, 1, 1),
          running_mean(1, c, 1, 1), running_var(1, c, 1, 1) {
        for (auto& g : gamma.v) g = T(1);
        for (auto& r : running_var.v) r = T(1);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.c != ch) throw ShapeMismatch("batch norm channel mismatch");
        Tensor<T> y = zeros_like(x);
        const std::size_t per = static_cast<std::size_t>(x.n) * x.h * x.w;
        trained_forward_ = training;
        if (training) {
            xhat_ = zeros_like(x);
            inv_std_.assign(ch, 0.0);
            for (int c = 0; c < ch; ++c) {
                double mean = 0.0;
                for (int b = 0; b < x.n; ++b)
                    for (int yy = 0; yy < x.h; ++yy)
                        for (int xx = 0; xx < x.w; ++xx) mean += x.at(b, c, yy, xx);
                mean /= static_cast<double>(per);
                double var = 0.0;
                for (int b = 0; b < x.n; ++b)
                    for (int yy = 0; yy < x.h; ++yy)
                        for (int xx = 0; xx < x.w; ++xx) {
                            const double d = x.at(b, c, yy, xx) - mean;
                            var += d * d;
                        }
                var /= static_cast<double>(per);
                const double istd = 1.0 / std::sqrt(var + eps);
                inv_std_[c] = istd;
                for (int b = 0; b < x.n; ++b)
                    for (int yy = 0; yy < x.h; ++yy)
                        for (int xx = 0; xx < x.w; ++xx) {
                            const double xh = (x.at(b, c, yy, xx) - mean) * istd;
                            xhat_.at(b, c, yy, xx) = static_cast<T>(xh);
                            y.at(b, c, yy, xx) =
                                static_cast<T>(gamma.v[c] * xh + beta.v[c]);
                        }
                running_mean.v[c] =
                    static_cast<T>((1.0 - momentum) * running_mean.v[c] + momentum * mean);
                running_var.v[c] =
                    static_cast<T>((1.0 - momentum) * running_var.v[c] + momentum * var);
            }
        } else {
            for (int c = 0; c < ch; ++c) {
                const double istd = 1.0 / std::sqrt(static_cast<double>(running_var.v[c]) + eps);
                const double mean = running_mean.v[c];
                for (int b = 0; b < x.n; ++b)
                    for (int yy = 0; yy < x.h; ++yy)
                        for (int xx = 0; xx < x.w; ++xx)
                            y.at(b, c, yy, xx) = static_cast<T>(
                                gamma.v[c] * ((x.at(b, c, yy, xx) - mean) * istd) + beta.v[c]);
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (!trained_forward_)
            throw InvalidArgument("batch norm backward requires a training-mode forward");
        Tensor<T> dx = zeros_like(dy);
        const double inv_n = 1.0 / (static_cast<double>(dy.n) * dy.h * dy.w);
        for (int c = 0; c < ch; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int b = 0; b < dy.n; ++b)
                for (int yy = 0; yy < dy.h; ++yy)
                    for (int xx = 0; xx < dy.w; ++xx) {
                        const double g = dy.at(b, c, yy, xx);
                        sum_dy += g;
                        sum_dy_xhat += g * xhat_.at(b, c, yy, xx);
                    }
            gbeta.v[c] += static_cast<T>(sum_dy);
            ggamma.v[c] += static_cast<T>(sum_dy_xhat);
            const double k = gamma.v[c] * inv_std_[c];
            for (int b = 0; b < dy.n; ++b)
                for (int yy = 0; yy < dy.h; ++yy)
                    for (int xx = 0; xx < dy.w; ++xx) {
                        const double g = dy.at(b, c, yy, xx);
                        const double xh = xhat_.at(b, c, yy, xx);
                        dx.at(b, c, yy, xx) = static_cast<T>(
                            k * (g - inv_n * sum_dy - xh * inv_n * sum_dy_xhat));
                    }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggamma, true});
        out.push_back({prefix + ".beta", &beta, &gbeta, true});
        out.push_back({prefix + ".running_mean", &running_mean, nullptr, false});
        out.push_back({prefix + ".running_var", &running_var, nullptr, false});
    }
};

template <typename T>
struct ReLU {
    std::vector<std::uint8_t> mask_;

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y = x;
        mask_.assign(x.size(), 0);
        for (std::size_t i = 0; i < y.v.size(); ++i) {
            if (y.v[i] > T(0))
                mask_[i] = 1;
            else
                y.v[i] = T(0);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (!mask_[i]) dx.v[i] = T(0);
        return dx;
    }
};

// Pixelwise softmax cross-entropy with per-class weights, averaged with the
// weighted-mean convention: loss = sum(w[t] * -log p[t]) / sum(w[t]).
template <typename T>
struct WeightedCrossEntropy {
    std::vector<double> class_weights;
    Tensor<T> probs_;
    std::vector<std::uint8_t> targets_;
    double weight_sum_ = 0.0;

    explicit WeightedCrossEntropy(std::vector<double> weights = {1.0, 1.0})
        : class_weights(std::move(weights)) {}

    double forward(const Tensor<T>& logits, const std::vector<std::uint8_t>& targets) {
        if (targets.size() != static_cast<std::size_t>(logits.n) * logits.h * logits.w)
            throw ShapeMismatch("target count does not match logit pixels");
        probs_ = zeros_like(logits);
        targets_ = targets;
        double loss = 0.0;
        weight_sum_ = 0.0;
        std::size_t pix = 0;
        for (int b = 0; b < logits.n; ++b)
            for (int y = 0; y < logits.h; ++y)
                for (int x = 0; x < logits.w; ++x, ++pix) {
                    const int t = targets[pix];
                    if (t < 0 || t >= logits.c)
                        throw InvalidArgument("target label outside class range");
                    double m = logits.at(b, 0, y, x);
                    for (int c = 1; c < logits.c; ++c)
                        m = std::max(m, static_cast<double>(logits.at(b, c, y, x)));
                    double denom = 0.0;
                    for (int c = 0; c < logits.c; ++c)
                        denom += std::exp(static_cast<double>(logits.at(b, c, y, x)) - m);
                    const double log_denom = std::log(denom);
                    for (int c = 0; c < logits.c; ++c)
                        probs_.at(b, c, y, x) = static_cast<T>(
                            std::exp(static_cast<double>(logits.at(b, c, y, x)) - m) / denom);
                    const double wt = class_weights[t];
                    loss += wt * (m + log_denom - logits.at(b, t, y, x));
                    weight_sum_ += wt;
                }
        if (weight_sum_ <= 0.0) throw InvalidArgument("zero total class weight");
        return loss / weight_sum_;
    }

    Tensor<T> backward() const {
        Tensor<T> dx = zeros_like(probs_);
        std::size_t pix = 0;
        for (int b = 0; b < dx.n; ++b)
            for (int y = 0; y < dx.h; ++y)
                for (int x = 0; x < dx.w; ++x, ++pix) {
                    const int t = targets_[pix];
                    const double wt = class_weights[t] / weight_sum_;
                    for (int c = 0; c < dx.c; ++c) {
                        const double p = probs_.at(b, c, y, x);
                        dx.at(b, c, y, x) = static_cast<T>(wt * (p - (c == t ? 1.0 : 0.0)));
                    }
                }
        return dx;
    }
};

}  // namespace stmtk::nn

#endif
