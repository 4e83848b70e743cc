#ifndef STMTK_IMAGE_HPP
#define STMTK_IMAGE_HPP

#include <cstdint>
#include <vector>

#include "stmtk/errors.hpp"

namespace stmtk {

// Dense 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB,
// 4 = RGBA). Used for video frames, STMap pixel planes and plot canvases.
struct Image8 {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image8() = default;
    Image8(int r, int c, int ch, std::uint8_t fill = 0)
        : rows(r), cols(c), channels(ch),
          data(static_cast<std::size_t>(r) * c * ch, fill) {}

    bool empty() const { return data.empty(); }

    std::size_t index(int r, int c, int ch = 0) const {
        return (static_cast<std::size_t>(r) * cols + c) * channels + ch;
    }

    std::uint8_t& at(int r, int c, int ch = 0) { return data[index(r, c, ch)]; }
    std::uint8_t at(int r, int c, int ch = 0) const { return data[index(r, c, ch)]; }

    bool in_bounds(int r, int c) const {
        return r >= 0 && r < rows && c >= 0 && c < cols;
    }

    bool same_shape(const Image8& o) const {
        return rows == o.rows && cols == o.cols && channels == o.channels;
    }
};

inline Image8 to_rgb(const Image8& img) {
    if (img.channels == 3) return img;
    Image8 out(img.rows, img.cols, 3);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            if (img.channels == 1) {
                const std::uint8_t v = img.at(r, c, 0);
                out.at(r, c, 0) = out.at(r, c, 1) = out.at(r, c, 2) = v;
            } else if (img.channels == 4) {
                out.at(r, c, 0) = img.at(r, c, 0);
                out.at(r, c, 1) = img.at(r, c, 1);
                out.at(r, c, 2) = img.at(r, c, 2);
            } else if (img.channels == 2) {  // gray + alpha
                const std::uint8_t v = img.at(r, c, 0);
                out.at(r, c, 0) = out.at(r, c, 1) = out.at(r, c, 2) = v;
            } else {
                throw InvalidArgument("unsupported channel count in to_rgb");
            }
        }
    }
    return out;
}

}  // namespace stmtk

#endif
