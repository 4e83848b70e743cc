#ifndef STMTK_NN_TENSOR_HPP
#define STMTK_NN_TENSOR_HPP

// Minimal dense NCHW tensor. Templated on the scalar so training runs at
// float32 while gradient checks run at float64.

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <vector>

#include "stmtk/errors.hpp"

namespace stmtk::nn {

template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

    std::size_t size() const { return v.size(); }

    std::size_t index(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x;
    }
    T& at(int b, int ch, int y, int x) { return v[index(b, ch, y, x)]; }
    T at(int b, int ch, int y, int x) const { return v[index(b, ch, y, x)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    bool all_finite() const {
        for (const T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw ShapeMismatch("tensor accumulate shape mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.n, t.c, t.h, t.w);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("tensor add shape mismatch");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

// Channel concatenation; inputs share batch and spatial dims.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty()) throw EmptyInput("nothing to concatenate");
    int total_c = 0;
    for (const auto* p : parts) {
        if (p->n != parts[0]->n || p->h != parts[0]->h || p->w != parts[0]->w)
            throw ShapeMismatch("concat spatial/batch mismatch");
        total_c += p->c;
    }
    Tensor<T> out(parts[0]->n, total_c, parts[0]->h, parts[0]->w);
    for (int b = 0; b < out.n; ++b) {
        int co = 0;
        for (const auto* p : parts) {
            for (int ch = 0; ch < p->c; ++ch, ++co)
                for (int y = 0; y < out.h; ++y)
                    for (int x = 0; x < out.w; ++x) out.at(b, co, y, x) = p->at(b, ch, y, x);
        }
    }
    return out;
}

// Inverse of concat_channels for the backward pass.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& grad, const std::vector<int>& sizes) {
    std::vector<Tensor<T>> out;
    int co = 0;
    for (const int sz : sizes) {
        Tensor<T> part(grad.n, sz, grad.h, grad.w);
        for (int b = 0; b < grad.n; ++b)
            for (int ch = 0; ch < sz; ++ch)
                for (int y = 0; y < grad.h; ++y)
                    for (int x = 0; x < grad.w; ++x)
                        part.at(b, ch, y, x) = grad.at(b, co + ch, y, x);
        out.push_back(std::move(part));
        co += sz;
    }
    if (co != grad.c) throw ShapeMismatch("split sizes do not cover channels");
    return out;
}

}  // namespace stmtk::nn

#endif
