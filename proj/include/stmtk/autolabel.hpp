#ifndef STMTK_AUTOLABEL_HPP
#define STMTK_AUTOLABEL_HPP

// Binarize a DMD foreground plane into a training mask: Otsu threshold on
// the magnitude, 3x3 morphological closing, then small-component removal.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "stmtk/components.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/segmask.hpp"

namespace stmtk {

struct OtsuResult {
    double threshold = 0.0;
    bool degenerate = false;  // all values equal; no split exists
};

// Classic between-class variance maximization over a 256-bin histogram
// spanning [min, max]. The threshold is the upper edge of the chosen bin;
// ties resolve to the lowest bin.
inline OtsuResult otsu_threshold(const Eigen::MatrixXd& values) {
    OtsuResult out;
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();
    if (!(hi > lo)) {
        out.degenerate = true;
        out.threshold = hi;
        return out;
    }
    constexpr int kBins = 256;
    std::array<std::int64_t, kBins> hist{};
    const double scale = kBins / (hi - lo);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        int b = static_cast<int>((values(i) - lo) * scale);
        b = std::clamp(b, 0, kBins - 1);
        hist[static_cast<std::size_t>(b)]++;
    }
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);

    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += static_cast<double>(hist[t]);
        if (w0 == 0.0) continue;
        const double w1 = total - w0;
        if (w1 == 0.0) break;
        sum0 += t * static_cast<double>(hist[t]);
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var_between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var_between > best) {
            best = var_between;
            best_bin = t;
        }
    }
    out.threshold = lo + (best_bin + 1) / scale;
    return out;
}

namespace detail {

// 3x3 dilation treats out-of-bounds as 0, erosion as 1, so closing never
// shrinks the mask at the border (closing stays extensive).
inline SegMask morph3x3(const SegMask& mask, bool dilate) {
    SegMask out = mask;
    const std::uint8_t oob = dilate ? 0 : 1;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            std::uint8_t acc = dilate ? 0 : 1;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    const std::uint8_t v = (rr < 0 || rr >= mask.rows || cc < 0 ||
                                            cc >= mask.cols)
                                               ? oob
                                               : mask.at(rr, cc);
                    if (dilate)
                        acc = std::max(acc, v);
                    else
                        acc = std::min(acc, v);
                }
            }
            out.at(r, c) = acc;
        }
    }
    return out;
}

}  // namespace detail

inline SegMask dilate3x3(const SegMask& mask) { return detail::morph3x3(mask, true); }
inline SegMask erode3x3(const SegMask& mask) { return detail::morph3x3(mask, false); }
inline SegMask close3x3(const SegMask& mask) { return erode3x3(dilate3x3(mask)); }

struct AutolabelResult {
    SegMask mask;
    double threshold = 0.0;
    bool degenerate_histogram = false;  // warning: flat foreground, empty mask
};

inline AutolabelResult foreground_to_mask(const Eigen::MatrixXd& fg, int min_area = 50) {
    if (!fg.allFinite()) throw InvalidArgument("foreground contains non-finite values");
    AutolabelResult out;
    out.mask.rows = static_cast<int>(fg.rows());
    out.mask.cols = static_cast<int>(fg.cols());
    out.mask.source = MaskSource::dmd_auto;
    out.mask.labels.assign(static_cast<std::size_t>(fg.size()), 0);

    const Eigen::MatrixXd mag = fg.cwiseAbs();
    const auto otsu = otsu_threshold(mag);
    out.threshold = otsu.threshold;
    if (otsu.degenerate) {
        out.degenerate_histogram = true;
        return out;  // flat input: nothing to label
    }
    for (int r = 0; r < out.mask.rows; ++r)
        for (int c = 0; c < out.mask.cols; ++c)
            out.mask.at(r, c) = mag(r, c) > otsu.threshold ? 1 : 0;

    out.mask = close3x3(out.mask);
    out.mask = drop_small_components(out.mask, min_area);
    return out;
}

}  // namespace stmtk

#endif
