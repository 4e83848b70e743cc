#ifndef STMTK_SEGMASK_HPP
#define STMTK_SEGMASK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stmtk/errors.hpp"
#include "stmtk/image.hpp"
#include "stmtk/image_io.hpp"

namespace stmtk {

enum class MaskSource : std::uint8_t { dmd_auto, manual, predicted, synthetic_truth };

// Binary n x m map: 1 = vehicle strand, 0 = background. Shape matches the
// STMap it labels (rows = space, cols = time).
struct SegMask {
    int rows = 0;
    int cols = 0;
    MaskSource source = MaskSource::manual;
    std::vector<std::uint8_t> labels;  // row-major, values in {0,1}

    SegMask() = default;
    SegMask(int r, int c, MaskSource s = MaskSource::manual)
        : rows(r), cols(c), source(s), labels(static_cast<std::size_t>(r) * c, 0) {}

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
    std::uint8_t& at(int r, int c) { return labels[index(r, c)]; }
    std::uint8_t at(int r, int c) const { return labels[index(r, c)]; }

    bool same_shape(const SegMask& o) const { return rows == o.rows && cols == o.cols; }

    std::size_t count_ones() const {
        std::size_t k = 0;
        for (const auto v : labels) k += v;
        return k;
    }
};

// On disk masks are 8-bit gray PNGs with values {0, 255}.
inline void save_mask_png(const std::string& path, const SegMask& mask) {
    Image8 img(mask.rows, mask.cols, 1);
    for (std::size_t i = 0; i < mask.labels.size(); ++i)
        img.data[i] = mask.labels[i] ? 255 : 0;
    write_png(path, img);
}

inline SegMask load_mask_png(const std::string& path, MaskSource source = MaskSource::manual) {
    Image8 img = read_png(path);
    if (img.channels != 1) {
        // Tolerate RGB masks; any nonzero channel marks foreground.
        Image8 rgb = to_rgb(img);
        SegMask mask(rgb.rows, rgb.cols, source);
        for (int r = 0; r < rgb.rows; ++r)
            for (int c = 0; c < rgb.cols; ++c)
                mask.at(r, c) = (rgb.at(r, c, 0) > 127 || rgb.at(r, c, 1) > 127 ||
                                 rgb.at(r, c, 2) > 127)
                                    ? 1
                                    : 0;
        return mask;
    }
    SegMask mask(img.rows, img.cols, source);
    for (std::size_t i = 0; i < img.data.size(); ++i) mask.labels[i] = img.data[i] > 127 ? 1 : 0;
    return mask;
}

}  // namespace stmtk

#endif
