#ifndef STMTK_SCANLINE_HPP
#define STMTK_SCANLINE_HPP

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stmtk/errors.hpp"

namespace stmtk {

// Ordered pixel path along one lane's travel direction. Point i is sampled
// into STMap row i every frame. direction_flag true means roadway distance
// grows with the point index.
struct ScanlinePath {
    std::vector<std::pair<int, int>> points;  // (row, col) image coordinates
    std::string lane_id;
    bool direction_flag = true;

    int length() const { return static_cast<int>(points.size()); }

    // n >= 2, points pairwise distinct, cumulative arc length strictly
    // increasing (consecutive points must differ).
    void validate() const {
        if (points.size() < 2)
            throw InvalidArgument("scanline path needs at least 2 points");
        std::set<std::pair<int, int>> seen;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!seen.insert(points[i]).second)
                throw InvalidArgument("scanline path points must be pairwise distinct");
            if (i > 0 && points[i] == points[i - 1])
                throw InvalidArgument("scanline path backtracks: zero-length step");
        }
    }
};

inline nlohmann::json to_json(const ScanlinePath& p) {
    nlohmann::json j;
    j["lane_id"] = p.lane_id;
    j["direction_flag"] = p.direction_flag;
    auto& pts = j["points"] = nlohmann::json::array();
    for (const auto& [r, c] : p.points) pts.push_back({r, c});
    return j;
}

inline ScanlinePath scanline_from_json(const nlohmann::json& j) {
    ScanlinePath p;
    p.lane_id = j.at("lane_id").get<std::string>();
    p.direction_flag = j.at("direction_flag").get<bool>();
    for (const auto& pt : j.at("points")) {
        if (!pt.is_array() || pt.size() != 2)
            throw ParseError("scanline point must be [row, col]");
        p.points.emplace_back(pt[0].get<int>(), pt[1].get<int>());
    }
    p.validate();
    return p;
}

inline void save_scanline(const std::string& path, const ScanlinePath& p) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << to_json(p).dump(2) << "\n";
}

inline ScanlinePath load_scanline(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad scanline JSON in " + path + ": " + e.what());
    }
    return scanline_from_json(j);
}

}  // namespace stmtk

#endif
