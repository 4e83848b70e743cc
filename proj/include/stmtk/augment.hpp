#ifndef STMTK_AUGMENT_HPP
#define STMTK_AUGMENT_HPP

// Tile cropping and deterministic affine augmentation (rescale, shear,
// translate; no rotation). Images resample bilinearly, masks with nearest
// neighbor so labels stay binary; both clamp to the tile edge so every
// output pixel is resampled from a real source pixel.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stmtk/errors.hpp"
#include "stmtk/image.hpp"
#include "stmtk/rng.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/stmap.hpp"

namespace stmtk {

struct AugmentSpec {
    bool rescale = false;
    bool shear = false;
    bool translate = false;
    double rescale_lo = 0.8, rescale_hi = 1.2;
    double shear_deg = 10.0;       // drawn from [-shear_deg, +shear_deg]
    double translate_frac = 0.1;   // of tile size, each axis
    int copies = 1;                // augmented variants per training tile

    bool enabled() const { return rescale || shear || translate; }
    static AugmentSpec identity() { return AugmentSpec{}; }
    static AugmentSpec all_on() {
        AugmentSpec s;
        s.rescale = s.shear = s.translate = true;
        return s;
    }
};

inline void to_json(nlohmann::json& j, const AugmentSpec& s) {
    j = nlohmann::json{{"rescale", s.rescale},
                       {"shear", s.shear},
                       {"translate", s.translate},
                       {"rescale_lo", s.rescale_lo},
                       {"rescale_hi", s.rescale_hi},
                       {"shear_deg", s.shear_deg},
                       {"translate_frac", s.translate_frac},
                       {"copies", s.copies}};
}

inline void from_json(const nlohmann::json& j, AugmentSpec& s) {
    s.rescale = j.value("rescale", false);
    s.shear = j.value("shear", false);
    s.translate = j.value("translate", false);
    s.rescale_lo = j.value("rescale_lo", 0.8);
    s.rescale_hi = j.value("rescale_hi", 1.2);
    s.shear_deg = j.value("shear_deg", 10.0);
    s.translate_frac = j.value("translate_frac", 0.1);
    s.copies = j.value("copies", 1);
}

// One drawn transform: forward map is scale about the tile center, then
// shear of the column axis, then translation.
struct TileTransform {
    double scale = 1.0;
    double shear_tan = 0.0;
    double d_row = 0.0;
    double d_col = 0.0;
};

inline TileTransform draw_transform(const AugmentSpec& spec, int tile, Rng& rng) {
    TileTransform t;
    if (spec.rescale) t.scale = rng.uniform(spec.rescale_lo, spec.rescale_hi);
    if (spec.shear) {
        const double deg = rng.uniform(-spec.shear_deg, spec.shear_deg);
        t.shear_tan = std::tan(deg * std::acos(-1.0) / 180.0);
    }
    if (spec.translate) {
        const double amp = spec.translate_frac * tile;
        t.d_row = rng.uniform(-amp, amp);
        t.d_col = rng.uniform(-amp, amp);
    }
    return t;
}

namespace detail {

// Inverse mapping of the forward transform for output pixel (r, c).
inline std::pair<double, double> source_coords(const TileTransform& t, double center_r,
                                               double center_c, int r, int c) {
    const double u = r - center_r - t.d_row;
    double v = c - center_c - t.d_col;
    v -= t.shear_tan * u;
    return {u / t.scale + center_r, v / t.scale + center_c};
}

inline double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace detail

inline Image8 warp_image(const Image8& src, const TileTransform& t) {
    Image8 out = src;
    const double cr = (src.rows - 1) / 2.0;
    const double cc = (src.cols - 1) / 2.0;
    for (int r = 0; r < src.rows; ++r) {
        for (int c = 0; c < src.cols; ++c) {
            auto [sr, sc] = detail::source_coords(t, cr, cc, r, c);
            sr = detail::clampd(sr, 0.0, src.rows - 1.0);
            sc = detail::clampd(sc, 0.0, src.cols - 1.0);
            const int r0 = static_cast<int>(sr);
            const int c0 = static_cast<int>(sc);
            const int r1 = std::min(r0 + 1, src.rows - 1);
            const int c1 = std::min(c0 + 1, src.cols - 1);
            const double fr = sr - r0, fc = sc - c0;
            for (int ch = 0; ch < src.channels; ++ch) {
                const double v00 = src.data[src.index(r0, c0, ch)];
                const double v01 = src.data[src.index(r0, c1, ch)];
                const double v10 = src.data[src.index(r1, c0, ch)];
                const double v11 = src.data[src.index(r1, c1, ch)];
                const double v = (1 - fr) * ((1 - fc) * v00 + fc * v01) +
                                 fr * ((1 - fc) * v10 + fc * v11);
                out.data[out.index(r, c, ch)] =
                    static_cast<std::uint8_t>(std::lround(detail::clampd(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

inline SegMask warp_mask(const SegMask& src, const TileTransform& t) {
    SegMask out = src;
    const double cr = (src.rows - 1) / 2.0;
    const double cc = (src.cols - 1) / 2.0;
    for (int r = 0; r < src.rows; ++r) {
        for (int c = 0; c < src.cols; ++c) {
            auto [sr, sc] = detail::source_coords(t, cr, cc, r, c);
            const int rr = std::clamp(static_cast<int>(std::lround(sr)), 0, src.rows - 1);
            const int cs = std::clamp(static_cast<int>(std::lround(sc)), 0, src.cols - 1);
            out.at(r, c) = src.at(rr, cs);
        }
    }
    return out;
}

struct TilePair {
    Image8 image;
    SegMask mask;
    int origin_row = 0;  // crop anchor in the source map
    int origin_col = 0;
    bool augmented = false;
};

// Tile anchors covering the span: stride = tile, plus a final window flush
// with the end so the remainder is covered (deduplicated).
inline std::vector<int> tile_anchors(int extent, int tile) {
    std::vector<int> anchors;
    for (int a = 0; a + tile <= extent; a += tile) anchors.push_back(a);
    const int last = extent - tile;
    if (anchors.empty() || anchors.back() != last) anchors.push_back(last);
    return anchors;
}

inline std::vector<TilePair> crop_tiles(const STMap& stmap, const SegMask& mask, int tile) {
    if (tile < 1) throw InvalidArgument("tile size must be positive");
    if (tile > stmap.n || tile > stmap.m)
        throw TileTooLarge("tile " + std::to_string(tile) + " exceeds map " +
                           std::to_string(stmap.n) + "x" + std::to_string(stmap.m));
    if (mask.rows != stmap.n || mask.cols != stmap.m)
        throw ShapeMismatch("mask shape does not match map");
    const Image8 full = stmap.to_image();
    std::vector<TilePair> out;
    for (int ar : tile_anchors(stmap.n, tile)) {
        for (int ac : tile_anchors(stmap.m, tile)) {
            TilePair p;
            p.origin_row = ar;
            p.origin_col = ac;
            p.image = Image8(tile, tile, 3);
            p.mask.rows = tile;
            p.mask.cols = tile;
            p.mask.source = mask.source;
            p.mask.labels.assign(static_cast<std::size_t>(tile) * tile, 0);
            for (int r = 0; r < tile; ++r) {
                for (int c = 0; c < tile; ++c) {
                    for (int ch = 0; ch < 3; ++ch)
                        p.image.data[p.image.index(r, c, ch)] =
                            full.data[full.index(ar + r, ac + c, ch)];
                    p.mask.at(r, c) = mask.at(ar + r, ac + c);
                }
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

// Grid crops; when any transform is enabled each crop is replaced by
// `copies` warped variants (a zero-amplitude transform therefore reproduces
// the plain crops). Disabled spec returns the raw crops.
inline std::vector<TilePair> crop_and_augment(const STMap& stmap, const SegMask& mask,
                                              int tile, const AugmentSpec& spec,
                                              std::uint64_t seed) {
    std::vector<TilePair> crops = crop_tiles(stmap, mask, tile);
    if (!spec.enabled()) return crops;
    Rng rng(seed);
    std::vector<TilePair> out;
    out.reserve(crops.size() * static_cast<std::size_t>(spec.copies));
    for (const auto& crop : crops) {
        for (int k = 0; k < spec.copies; ++k) {
            const TileTransform t = draw_transform(spec, tile, rng);
            TilePair aug;
            aug.origin_row = crop.origin_row;
            aug.origin_col = crop.origin_col;
            aug.augmented = true;
            aug.image = warp_image(crop.image, t);
            aug.mask = warp_mask(crop.mask, t);
            out.push_back(std::move(aug));
        }
    }
    return out;
}

}  // namespace stmtk

#endif
