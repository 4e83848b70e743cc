#ifndef STMTK_PLOT_HPP
#define STMTK_PLOT_HPP

// PNG rendering: eigenvalue spectrum plots and STMap trajectory overlays.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "stmtk/dmd.hpp"
#include "stmtk/image.hpp"
#include "stmtk/stmap.hpp"
#include "stmtk/traj.hpp"

namespace stmtk {

struct PlotColor {
    std::uint8_t r = 0, g = 0, b = 0;
};

// Overlay palette: detected strands in purple, reference tracks in blue.
inline constexpr PlotColor kDetectedColor{160, 32, 240};
inline constexpr PlotColor kReferenceColor{0, 64, 255};

namespace detail {

inline void put_px(Image8& img, int r, int c, PlotColor col) {
    if (!img.in_bounds(r, c)) return;
    img.at(r, c, 0) = col.r;
    img.at(r, c, 1) = col.g;
    img.at(r, c, 2) = col.b;
}

inline void fill_disc(Image8& img, int r, int c, int radius, PlotColor col) {
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) put_px(img, r + dr, c + dc, col);
}

}  // namespace detail

// Eigenvalues on the complex plane with the unit circle for reference.
// Modes under the stationarity tolerance are drawn red, the rest dark blue.
inline Image8 spectrum_plot(const std::vector<Complex>& eigenvalues,
                            double stationarity_tol = 1e-2, int size = 480) {
    if (size < 64) throw InvalidArgument("spectrum plot size too small");
    Image8 img(size, size, 3, 255);
    double extent = 1.25;
    for (const auto& l : eigenvalues) extent = std::max(extent, 1.1 * std::abs(l));
    const double scale = (size / 2.0 - 4.0) / extent;
    const int cx = size / 2, cy = size / 2;

    const PlotColor axis{200, 200, 200};
    for (int i = 0; i < size; ++i) {
        detail::put_px(img, cy, i, axis);
        detail::put_px(img, i, cx, axis);
    }
    const PlotColor circle{0, 0, 0};
    const int steps = 8 * size;
    for (int i = 0; i < steps; ++i) {
        const double a = 2.0 * std::numbers::pi * i / steps;
        detail::put_px(img, cy - static_cast<int>(std::lround(std::sin(a) * scale)),
                       cx + static_cast<int>(std::lround(std::cos(a) * scale)), circle);
    }
    for (const auto& l : eigenvalues) {
        const bool stationary = stationarity_score(l) <= stationarity_tol;
        const PlotColor dot = stationary ? PlotColor{220, 30, 30} : PlotColor{30, 30, 160};
        const int c = cx + static_cast<int>(std::lround(l.real() * scale));
        const int r = cy - static_cast<int>(std::lround(l.imag() * scale));
        detail::fill_disc(img, r, c, 3, dot);
    }
    return img;
}

inline Image8 stmap_canvas(const STMap& map) {
    Image8 img(map.n, map.m, 3);
    for (int i = 0; i < map.n; ++i)
        for (int t = 0; t < map.m; ++t)
            for (int ch = 0; ch < 3; ++ch) img.at(i, t, ch) = map.at(i, t, ch);
    return img;
}

// One sample per occupied column; a vertical 3-pixel dab keeps thin strands
// visible at native STMap resolution.
inline void draw_pixel_trajectory(Image8& canvas, const PixelTrajectory& traj,
                                  PlotColor color = kDetectedColor) {
    for (const auto& s : traj.samples) {
        detail::put_px(canvas, s.y_pix - 1, s.frame, color);
        detail::put_px(canvas, s.y_pix, s.frame, color);
        detail::put_px(canvas, s.y_pix + 1, s.frame, color);
    }
}

// World-coordinate tracks are mapped back through the calibration; samples
// outside the calibrated span or the canvas are skipped, not clamped.
inline void draw_world_trajectory(Image8& canvas, const WorldTrajectory& traj,
                                  const CalibrationTable& cal,
                                  PlotColor color = kReferenceColor) {
    cal.validate();
    for (const auto& s : traj.samples) {
        const int frame = static_cast<int>(std::lround(s.time_s * cal.frame_rate));
        double y = 0.0;
        try {
            y = distance_to_pixel(cal, s.position_ft);
        } catch (const OutOfCalibrationRange&) {
            continue;
        }
        const int row = static_cast<int>(std::lround(y));
        detail::put_px(canvas, row - 1, frame, color);
        detail::put_px(canvas, row, frame, color);
        detail::put_px(canvas, row + 1, frame, color);
    }
}

}  // namespace stmtk

#endif
