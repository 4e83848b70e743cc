#ifndef STMTK_STMAP_HPP
#define STMTK_STMAP_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stmtk/binio.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/image.hpp"
#include "stmtk/image_io.hpp"
#include "stmtk/scanline.hpp"

namespace stmtk {

// Real-valued n x m intensity plane in [0,1]; rows = space, cols = time.
using GrayMap = Eigen::MatrixXd;

using Rgb = std::array<std::uint8_t, 3>;

// Spatial-temporal map: scanline pixels stacked frame by frame. Row i holds
// scanline point i over time, column t holds the full scanline of frame t.
struct STMap {
    int n = 0;  // pixels along the scanline (space)
    int m = 0;  // frame count (time)
    double frame_rate = 0.0;
    std::string lane_id;
    std::vector<std::uint8_t> pixels;  // row-major n x m x 3

    STMap() = default;
    STMap(int n_, int m_, double fps, std::string lane = {})
        : n(n_), m(m_), frame_rate(fps), lane_id(std::move(lane)),
          pixels(static_cast<std::size_t>(n_) * m_ * 3, 0) {}

    std::size_t index(int i, int t, int ch) const {
        return (static_cast<std::size_t>(i) * m + t) * 3 + ch;
    }

    std::uint8_t& at(int i, int t, int ch) { return pixels[index(i, t, ch)]; }
    std::uint8_t at(int i, int t, int ch) const { return pixels[index(i, t, ch)]; }

    Rgb rgb(int i, int t) const { return {at(i, t, 0), at(i, t, 1), at(i, t, 2)}; }

    void set_rgb(int i, int t, const Rgb& v) {
        at(i, t, 0) = v[0];
        at(i, t, 1) = v[1];
        at(i, t, 2) = v[2];
    }

    Image8 to_image() const {
        Image8 img(n, m, 3);
        img.data = pixels;
        return img;
    }
};

// Nearest-pixel scanline sample of one frame (no interpolation).
inline std::vector<Rgb> sample_scanline(const Image8& frame, const ScanlinePath& path) {
    if (frame.channels != 3) throw InvalidArgument("sample_scanline: frame must be RGB");
    std::vector<Rgb> out;
    out.reserve(path.points.size());
    for (const auto& [r, c] : path.points) {
        if (!frame.in_bounds(r, c))
            throw OutOfBounds("scanline point (" + std::to_string(r) + "," + std::to_string(c) +
                              ") outside frame " + std::to_string(frame.rows) + "x" +
                              std::to_string(frame.cols));
        out.push_back({frame.at(r, c, 0), frame.at(r, c, 1), frame.at(r, c, 2)});
    }
    return out;
}

inline STMap build_stmap(const std::vector<Image8>& frames, const ScanlinePath& path,
                         double frame_rate) {
    if (frames.size() < 2)
        throw EmptySource("need at least 2 frames, got " + std::to_string(frames.size()));
    path.validate();
    const int rows = frames.front().rows, cols = frames.front().cols;
    for (const auto& f : frames) {
        if (f.rows != rows || f.cols != cols)
            throw InconsistentFrameSize("frame dimensions differ across the sequence");
    }
    STMap map(path.length(), static_cast<int>(frames.size()), frame_rate, path.lane_id);
    for (int t = 0; t < map.m; ++t) {
        const auto column = sample_scanline(frames[t], path);
        for (int i = 0; i < map.n; ++i) map.set_rgb(i, t, column[i]);
    }
    return map;
}

// Lexicographic listing of PNG/PPM frames in a directory; order = time order.
inline std::vector<std::string> list_frame_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".PNG" || ext == ".PPM")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline std::vector<Image8> load_frames(const std::string& dir) {
    std::vector<Image8> frames;
    for (const auto& f : list_frame_files(dir)) frames.push_back(to_rgb(read_image(f)));
    return frames;
}

// ITU-R BT.601 luma, scaled to [0,1].
inline GrayMap to_gray(const STMap& map) {
    GrayMap g(map.n, map.m);
    for (int i = 0; i < map.n; ++i) {
        for (int t = 0; t < map.m; ++t) {
            const double v =
                (0.299 * map.at(i, t, 0) + 0.587 * map.at(i, t, 1) + 0.114 * map.at(i, t, 2)) /
                255.0;
            g(i, t) = std::clamp(v, 0.0, 1.0);
        }
    }
    return g;
}

// --- STMP binary format -----------------------------------------------------
// {magic "STMP", version u32, n u32, m u32, channels u32, frame_rate f64}
// followed by row-major u8 pixel data, all little-endian.

inline constexpr std::uint32_t kStmapFormatVersion = 1;

inline void save_stmap(const std::string& path, const STMap& map) {
    binio::Writer w(path);
    w.magic("STMP");
    w.u32(kStmapFormatVersion);
    w.u32(static_cast<std::uint32_t>(map.n));
    w.u32(static_cast<std::uint32_t>(map.m));
    w.u32(3);
    w.f64(map.frame_rate);
    w.bytes(map.pixels.data(), map.pixels.size());
    w.close();
}

inline STMap load_stmap(const std::string& path) {
    binio::Reader r(path);
    r.expect_magic("STMP", "STMap");
    const std::uint32_t version = r.u32();
    if (version != kStmapFormatVersion)
        throw ParseError("unsupported STMP version " + std::to_string(version));
    const std::uint32_t n = r.u32();
    const std::uint32_t m = r.u32();
    const std::uint32_t channels = r.u32();
    if (channels != 3) throw ParseError("STMP channels must be 3");
    const double fps = r.f64();
    STMap map(static_cast<int>(n), static_cast<int>(m), fps);
    r.bytes(map.pixels.data(), map.pixels.size());
    return map;
}

// --- GRYF binary format -----------------------------------------------------
// Exact real-valued planes (DMD foreground/background, generator plates):
// {magic "GRYF", version u32, rows u32, cols u32} + row-major f64.

inline void save_graymap(const std::string& path, const GrayMap& g) {
    binio::Writer w(path);
    w.magic("GRYF");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(g.rows()));
    w.u32(static_cast<std::uint32_t>(g.cols()));
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index t = 0; t < g.cols(); ++t) w.f64(g(i, t));
    w.close();
}

inline GrayMap load_graymap(const std::string& path) {
    binio::Reader r(path);
    r.expect_magic("GRYF", "GrayMap");
    if (r.u32() != 1) throw ParseError("unsupported GRYF version");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    GrayMap g(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t t = 0; t < cols; ++t) g(i, t) = r.f64();
    return g;
}

}  // namespace stmtk

#endif
