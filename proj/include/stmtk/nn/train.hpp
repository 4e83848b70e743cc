#ifndef STMTK_NN_TRAIN_HPP
#define STMTK_NN_TRAIN_HPP

// Training and inference drivers: SGD with momentum over the labeled tile
// dataset, per-epoch validation, and whole-map segmentation by tiling with
// logit averaging over overlaps.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "stmtk/dataset.hpp"
#include "stmtk/image.hpp"
#include "stmtk/nn/resunet.hpp"
#include "stmtk/segmask.hpp"

namespace stmtk::nn {

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::vector<double> class_weights;  // the weights actually used
};

// Copy one tile image into a batch slot, scaled to [0,1]. Grayscale input
// nets average the channels; RGB nets take the channels as stored.
template <typename T>
void fill_input(Tensor<T>& batch, int slot, const Image8& img, int in_channels) {
    if (img.rows != batch.h || img.cols != batch.w)
        throw ShapeMismatch("tile does not match network input size");
    const Image8 rgb = to_rgb(img);
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) {
            if (in_channels == 1) {
                const double g = (rgb.at(y, x, 0) + rgb.at(y, x, 1) + rgb.at(y, x, 2)) / 3.0;
                batch.at(slot, 0, y, x) = static_cast<T>(g / 255.0);
            } else if (in_channels == 3) {
                for (int c = 0; c < 3; ++c)
                    batch.at(slot, c, y, x) = static_cast<T>(rgb.at(y, x, c) / 255.0);
            } else {
                throw InvalidArgument("network input must be 1 or 3 channels");
            }
        }
}

// Balanced weights total/(classes * count_c) from the training-split masks.
// A class that never occurs gets weight 1; the loss never samples it.
inline std::vector<double> inverse_frequency_weights(const LabeledDataset& ds, int classes) {
    std::vector<double> counts(classes, 0.0);
    double total = 0.0;
    for (const std::size_t i : ds.indices_of(Split::train))
        for (const std::uint8_t v : ds.pairs[i].mask.labels) {
            if (v >= classes) throw InvalidArgument("mask label outside class range");
            counts[v] += 1.0;
            total += 1.0;
        }
    if (total == 0.0) throw EmptyInput("training split has no pixels");
    std::vector<double> w(classes, 1.0);
    for (int c = 0; c < classes; ++c)
        if (counts[c] > 0.0) w[c] = total / (classes * counts[c]);
    return w;
}

template <typename T>
struct SgdMomentum {
    double lr = 0.05, mu = 0.9;
    std::vector<Tensor<T>> velocity;

    void step(std::vector<ParamRef<T>>& params) {
        if (velocity.empty()) {
            for (auto& p : params)
                velocity.push_back(p.grad ? zeros_like(*p.value) : Tensor<T>());
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].grad) continue;
            auto& v = velocity[i];
            auto& val = params[i].value->v;
            const auto& g = params[i].grad->v;
            for (std::size_t k = 0; k < val.size(); ++k) {
                v.v[k] = static_cast<T>(mu * v.v[k] - lr * g[k]);
                val[k] += v.v[k];
            }
        }
    }
};

namespace detail {

template <typename T>
std::vector<std::uint8_t> targets_of(const LabeledDataset& ds,
                                     const std::vector<std::size_t>& idx, std::size_t lo,
                                     std::size_t hi) {
    std::vector<std::uint8_t> t;
    for (std::size_t i = lo; i < hi; ++i) {
        const auto& m = ds.pairs[idx[i]].mask;
        t.insert(t.end(), m.labels.begin(), m.labels.end());
    }
    return t;
}

template <typename T>
Tensor<T> batch_of(const LabeledDataset& ds, const std::vector<std::size_t>& idx,
                   std::size_t lo, std::size_t hi, const NetConfig& cfg) {
    Tensor<T> x(static_cast<int>(hi - lo), cfg.in_channels, cfg.tile, cfg.tile);
    for (std::size_t i = lo; i < hi; ++i)
        fill_input(x, static_cast<int>(i - lo), ds.pairs[idx[i]].image, cfg.in_channels);
    return x;
}

}  // namespace detail

// Mean IoU over aggregated per-class counts across a set of dataset tiles,
// using eval-mode argmax predictions.
template <typename T>
double dataset_mean_iou(ResUNet<T>& net, const LabeledDataset& ds,
                        const std::vector<std::size_t>& idx) {
    const auto& cfg = net.config();
    std::vector<double> inter(cfg.classes, 0.0), uni(cfg.classes, 0.0);
    for (std::size_t at = 0; at < idx.size(); at += cfg.batch_size) {
        const std::size_t hi = std::min(idx.size(), at + cfg.batch_size);
        const auto logits = net.forward(detail::batch_of<T>(ds, idx, at, hi, cfg), false);
        std::size_t pix = 0;
        for (std::size_t i = at; i < hi; ++i) {
            const auto& truth = ds.pairs[idx[i]].mask;
            const int slot = static_cast<int>(i - at);
            for (int y = 0; y < cfg.tile; ++y)
                for (int x = 0; x < cfg.tile; ++x, ++pix) {
                    int best = 0;
                    for (int c = 1; c < cfg.classes; ++c)
                        if (logits.at(slot, c, y, x) > logits.at(slot, best, y, x)) best = c;
                    const int t = truth.at(y, x);
                    if (best == t)
                        inter[t] += 1.0, uni[t] += 1.0;
                    else
                        uni[t] += 1.0, uni[best] += 1.0;
                }
        }
        (void)pix;
    }
    double sum = 0.0;
    for (int c = 0; c < cfg.classes; ++c) sum += uni[c] == 0.0 ? 1.0 : inter[c] / uni[c];
    return sum / cfg.classes;
}

template <typename T>
TrainResult train(ResUNet<T>& net, const LabeledDataset& ds) {
    const NetConfig& cfg = net.config();
    cfg.validate();
    auto train_idx = ds.indices_of(Split::train);
    const auto val_idx = ds.indices_of(Split::validation);
    if (train_idx.empty()) throw EmptyInput("training split is empty");
    for (const auto& p : ds.pairs)
        if (p.image.rows != cfg.tile || p.image.cols != cfg.tile)
            throw ShapeMismatch("dataset tile size does not match the network");

    TrainResult result;
    result.class_weights = cfg.class_weights.empty()
                               ? inverse_frequency_weights(ds, cfg.classes)
                               : cfg.class_weights;
    WeightedCrossEntropy<T> loss(result.class_weights);
    SgdMomentum<T> opt;
    opt.lr = cfg.learning_rate;
    opt.mu = cfg.momentum;
    auto params = net.params();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffler(cfg.seed + 1000003ULL * static_cast<std::uint64_t>(epoch));
        shuffler.shuffle(train_idx);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < train_idx.size(); at += cfg.batch_size) {
            const std::size_t hi = std::min(train_idx.size(), at + cfg.batch_size);
            const auto x = detail::batch_of<T>(ds, train_idx, at, hi, cfg);
            const auto targets = detail::targets_of<T>(ds, train_idx, at, hi);
            const double step_loss = loss.forward(net.forward(x, true), targets);
            if (!std::isfinite(step_loss))
                throw DivergenceDetected("training loss is not finite at epoch " +
                                         std::to_string(epoch));
            net.zero_grad();
            net.backward(loss.backward());
            opt.step(params);
            loss_sum += step_loss;
            ++steps;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(steps);
        if (!val_idx.empty()) {
            double vsum = 0.0;
            std::size_t vbatches = 0;
            for (std::size_t at = 0; at < val_idx.size(); at += cfg.batch_size) {
                const std::size_t hi = std::min(val_idx.size(), at + cfg.batch_size);
                const auto logits =
                    net.forward(detail::batch_of<T>(ds, val_idx, at, hi, cfg), false);
                vsum += loss.forward(logits, detail::targets_of<T>(ds, val_idx, at, hi));
                ++vbatches;
            }
            stats.val_loss = vsum / static_cast<double>(vbatches);
            stats.val_iou = dataset_mean_iou(net, ds, val_idx);
        }
        result.history.push_back(stats);
    }
    return result;
}

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "epoch,train_loss,val_loss,val_iou\n";
    char buf[160];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_iou);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

// Segment a whole map by sliding the network tile across it (default stride
// tile/2), averaging logits where windows overlap, then taking the argmax.
// Maps smaller than one tile are edge-replicated up to tile size.
template <typename T>
SegMask segment(ResUNet<T>& net, const Image8& map, int stride = 0) {
    const NetConfig& cfg = net.config();
    if (map.rows <= 0 || map.cols <= 0) throw EmptyInput("empty map");
    if (stride <= 0) stride = std::max(1, cfg.tile / 2);

    const int prows = std::max(map.rows, cfg.tile);
    const int pcols = std::max(map.cols, cfg.tile);
    Image8 padded(prows, pcols, map.channels);
    for (int r = 0; r < prows; ++r)
        for (int c = 0; c < pcols; ++c)
            for (int ch = 0; ch < map.channels; ++ch)
                padded.at(r, c, ch) =
                    map.at(std::min(r, map.rows - 1), std::min(c, map.cols - 1), ch);

    auto anchors = [&](int span) {
        std::vector<int> a;
        for (int at = 0; at + cfg.tile < span; at += stride) a.push_back(at);
        const int flush = span - cfg.tile;
        if (a.empty() || a.back() != flush) a.push_back(flush);
        return a;
    };

    std::vector<double> acc(static_cast<std::size_t>(cfg.classes) * prows * pcols, 0.0);
    std::vector<std::uint32_t> hits(static_cast<std::size_t>(prows) * pcols, 0);
    Image8 tile_img(cfg.tile, cfg.tile, map.channels);
    for (const int ar : anchors(prows))
        for (const int ac : anchors(pcols)) {
            for (int y = 0; y < cfg.tile; ++y)
                for (int x = 0; x < cfg.tile; ++x)
                    for (int ch = 0; ch < map.channels; ++ch)
                        tile_img.at(y, x, ch) = padded.at(ar + y, ac + x, ch);
            Tensor<T> x(1, cfg.in_channels, cfg.tile, cfg.tile);
            fill_input(x, 0, tile_img, cfg.in_channels);
            const auto logits = net.forward(x, false);
            for (int y = 0; y < cfg.tile; ++y)
                for (int xx = 0; xx < cfg.tile; ++xx) {
                    const std::size_t p =
                        static_cast<std::size_t>(ar + y) * pcols + (ac + xx);
                    for (int c = 0; c < cfg.classes; ++c)
                        acc[static_cast<std::size_t>(c) * prows * pcols + p] +=
                            logits.at(0, c, y, xx);
                    ++hits[p];
                }
        }

    SegMask out(map.rows, map.cols, MaskSource::predicted);
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * pcols + c;
            int best = 0;
            double bestv = acc[p] / hits[p];
            for (int cls = 1; cls < cfg.classes; ++cls) {
                const double v =
                    acc[static_cast<std::size_t>(cls) * prows * pcols + p] / hits[p];
                if (v > bestv) {
                    bestv = v;
                    best = cls;
                }
            }
            out.at(r, c) = static_cast<std::uint8_t>(best);
        }
    return out;
}

}  // namespace stmtk::nn

#endif
