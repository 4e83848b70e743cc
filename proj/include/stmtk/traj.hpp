#ifndef STMTK_TRAJ_HPP
#define STMTK_TRAJ_HPP

// Masks to per-vehicle trajectories: strand extraction (8-connected
// components), lower-boundary tracing per column, and piecewise-linear
// pixel-to-distance calibration.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stmtk/components.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/segmask.hpp"

namespace stmtk {

struct Strand {
    int id = 0;
    std::vector<std::pair<int, int>> pixels;  // (row, col), scan order
    int min_row = 0, max_row = 0, min_col = 0, max_col = 0;
    int area = 0;
    // more than one pixel run in a column for > 20% of occupied columns:
    // likely two vehicles merged by occlusion; emitted unsplit
    bool merged_suspect = false;
};

inline std::vector<Strand> extract_strands(const SegMask& mask, int min_area = 50) {
    const Components comps = label_components(mask);
    std::vector<Strand> strands;
    std::vector<int> id_map(comps.stats.size() + 1, 0);
    int next = 1;
    for (const auto& s : comps.stats) {
        if (s.area < min_area) continue;
        Strand st;
        st.id = next++;
        st.min_row = s.min_row;
        st.max_row = s.max_row;
        st.min_col = s.min_col;
        st.max_col = s.max_col;
        st.area = s.area;
        st.pixels.reserve(static_cast<std::size_t>(s.area));
        id_map[static_cast<std::size_t>(s.label)] = st.id;
        strands.push_back(std::move(st));
    }
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            const int lbl = comps.labels[static_cast<std::size_t>(r) * mask.cols + c];
            if (!lbl || !id_map[static_cast<std::size_t>(lbl)]) continue;
            strands[static_cast<std::size_t>(id_map[static_cast<std::size_t>(lbl)] - 1)]
                .pixels.emplace_back(r, c);
        }
    }
    // occlusion diagnostic: count columns whose rows form >1 contiguous run
    for (auto& st : strands) {
        std::map<int, std::vector<int>> rows_by_col;
        for (const auto& [r, c] : st.pixels) rows_by_col[c].push_back(r);
        int multi = 0;
        for (auto& [c, rows] : rows_by_col) {
            int runs = 1;
            for (std::size_t i = 1; i < rows.size(); ++i)
                if (rows[i] != rows[i - 1] + 1) ++runs;
            if (runs > 1) ++multi;
        }
        st.merged_suspect =
            !rows_by_col.empty() &&
            multi * 5 > static_cast<int>(rows_by_col.size());  // multi/cols > 0.2
    }
    return strands;
}

struct PixelSample {
    int frame = 0;  // column index (time)
    int y_pix = 0;  // extremal row in that column
};

struct PixelTrajectory {
    int strand_id = 0;
    std::vector<PixelSample> samples;             // one per occupied column
    std::vector<std::pair<int, int>> gaps;        // inclusive runs of empty columns
};

// Per-column extremum of the strand: max row when distance grows with row
// index (direction_flag true), min row otherwise. Empty columns inside the
// bounding box are reported as gaps, not interpolated.
inline PixelTrajectory lower_boundary(const Strand& strand, bool direction_flag = true) {
    if (strand.pixels.empty()) throw EmptyInput("strand has no pixels");
    PixelTrajectory out;
    out.strand_id = strand.id;
    std::map<int, int> extremum;
    for (const auto& [r, c] : strand.pixels) {
        auto it = extremum.find(c);
        if (it == extremum.end())
            extremum[c] = r;
        else if (direction_flag ? r > it->second : r < it->second)
            it->second = r;
    }
    int gap_start = -1;
    for (int c = strand.min_col; c <= strand.max_col; ++c) {
        auto it = extremum.find(c);
        if (it == extremum.end()) {
            if (gap_start < 0) gap_start = c;
            continue;
        }
        if (gap_start >= 0) {
            out.gaps.emplace_back(gap_start, c - 1);
            gap_start = -1;
        }
        out.samples.push_back({c, it->second});
    }
    return out;
}

// Piecewise-linear map from scanline pixel index to roadway distance.
struct CalibrationTable {
    std::vector<std::pair<int, double>> anchors;  // (pixel row, feet)
    double frame_rate = 0.0;
    bool direction_flag = true;

    void validate() const {
        if (anchors.size() < 2) throw InputError("calibration needs at least 2 anchors");
        if (!(frame_rate > 0.0)) throw InputError("calibration frame_rate must be positive");
        for (std::size_t i = 1; i < anchors.size(); ++i) {
            if (anchors[i].first <= anchors[i - 1].first)
                throw InputError("calibration pixel indices must be strictly increasing");
            const double step = anchors[i].second - anchors[i - 1].second;
            if (direction_flag ? step <= 0.0 : step >= 0.0)
                throw InputError("calibration distances must be strictly monotone in the "
                                 "scanline direction");
        }
    }

    double pixel_range_lo() const { return anchors.front().first; }
    double pixel_range_hi() const { return anchors.back().first; }
};

inline double pixel_to_distance(const CalibrationTable& cal, double y_pix) {
    if (y_pix < cal.anchors.front().first || y_pix > cal.anchors.back().first)
        throw OutOfCalibrationRange("pixel " + std::to_string(y_pix) +
                                    " outside calibrated span");
    for (std::size_t i = 1; i < cal.anchors.size(); ++i) {
        const auto& [p0, d0] = cal.anchors[i - 1];
        const auto& [p1, d1] = cal.anchors[i];
        if (y_pix <= p1) {
            const double t = (y_pix - p0) / static_cast<double>(p1 - p0);
            return d0 + t * (d1 - d0);
        }
    }
    return cal.anchors.back().second;  // y_pix == last anchor
}

// Inverse of pixel_to_distance (the calibration is strictly monotone).
inline double distance_to_pixel(const CalibrationTable& cal, double feet) {
    const double lo = std::min(cal.anchors.front().second, cal.anchors.back().second);
    const double hi = std::max(cal.anchors.front().second, cal.anchors.back().second);
    if (feet < lo || feet > hi)
        throw OutOfCalibrationRange("distance " + std::to_string(feet) +
                                    " outside calibrated span");
    for (std::size_t i = 1; i < cal.anchors.size(); ++i) {
        const auto& [p0, d0] = cal.anchors[i - 1];
        const auto& [p1, d1] = cal.anchors[i];
        const double seg_lo = std::min(d0, d1), seg_hi = std::max(d0, d1);
        if (feet >= seg_lo && feet <= seg_hi) {
            const double t = (feet - d0) / (d1 - d0);
            return p0 + t * (p1 - p0);
        }
    }
    return cal.anchors.back().first;
}

struct WorldSample {
    double time_s = 0.0;
    double position_ft = 0.0;
};

struct WorldTrajectory {
    int strand_id = 0;
    std::vector<WorldSample> samples;  // time strictly increasing
};

inline WorldTrajectory to_world(const PixelTrajectory& pix, const CalibrationTable& cal) {
    cal.validate();
    WorldTrajectory out;
    out.strand_id = pix.strand_id;
    out.samples.reserve(pix.samples.size());
    for (const auto& s : pix.samples)
        out.samples.push_back({s.frame / cal.frame_rate, pixel_to_distance(cal, s.y_pix)});
    return out;
}

inline nlohmann::json calibration_to_json(const CalibrationTable& cal) {
    nlohmann::json j;
    j["frame_rate"] = cal.frame_rate;
    j["direction_flag"] = cal.direction_flag;
    j["anchors"] = nlohmann::json::array();
    for (const auto& [p, d] : cal.anchors) j["anchors"].push_back({p, d});
    return j;
}

inline CalibrationTable calibration_from_json(const nlohmann::json& j) {
    CalibrationTable cal;
    try {
        cal.frame_rate = j.at("frame_rate").get<double>();
        cal.direction_flag = j.value("direction_flag", true);
        for (const auto& a : j.at("anchors"))
            cal.anchors.emplace_back(a.at(0).get<int>(), a.at(1).get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad calibration: ") + e.what());
    }
    cal.validate();
    return cal;
}

inline CalibrationTable load_calibration(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open calibration: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad calibration json: ") + e.what());
    }
    return calibration_from_json(j);
}

inline void save_calibration(const std::string& path, const CalibrationTable& cal) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write calibration: " + path);
    f << calibration_to_json(cal).dump(2) << "\n";
}

// --- trajectory CSV ----------------------------------------------------------

struct TrackedVehicle {
    PixelTrajectory pix;
    WorldTrajectory world;
};

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<TrackedVehicle>& vehicles) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "strand_id,frame,time_s,y_pix,position_ft\n";
    char line[160];
    for (const auto& v : vehicles) {
        if (v.pix.samples.size() != v.world.samples.size())
            throw ShapeMismatch("pixel/world sample counts differ");
        for (std::size_t i = 0; i < v.pix.samples.size(); ++i) {
            std::snprintf(line, sizeof(line), "%d,%d,%.10g,%d,%.10g\n", v.pix.strand_id,
                          v.pix.samples[i].frame, v.world.samples[i].time_s,
                          v.pix.samples[i].y_pix, v.world.samples[i].position_ft);
            f << line;
        }
    }
}

inline std::vector<TrackedVehicle> read_trajectory_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open trajectory csv: " + path);
    std::string header;
    std::getline(f, header);
    if (header != "strand_id,frame,time_s,y_pix,position_ft")
        throw ParseError("unexpected trajectory csv header: " + header);
    std::vector<TrackedVehicle> out;
    std::map<int, std::size_t> by_id;
    std::string line;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        int id, frame, y_pix;
        double time_s, pos;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%d,%lf", &id, &frame, &time_s, &y_pix,
                        &pos) != 5)
            throw ParseError("bad trajectory csv line " + std::to_string(lineno));
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            it = by_id.emplace(id, out.size()).first;
            out.emplace_back();
            out.back().pix.strand_id = id;
            out.back().world.strand_id = id;
        }
        auto& v = out[it->second];
        v.pix.samples.push_back({frame, y_pix});
        v.world.samples.push_back({time_s, pos});
    }
    return out;
}

}  // namespace stmtk

#endif
