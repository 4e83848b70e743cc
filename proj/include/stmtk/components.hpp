#ifndef STMTK_COMPONENTS_HPP
#define STMTK_COMPONENTS_HPP

// Connected-component labeling on binary masks (8-connectivity), two-pass
// union-find. Component ids are dense and ordered by first pixel in scan
// order; 0 stays background.

#include <cstdint>
#include <numeric>
#include <vector>

#include "stmtk/segmask.hpp"

namespace stmtk {

struct ComponentStats {
    int label = 0;
    int area = 0;
    int min_row = 0, min_col = 0, max_row = 0, max_col = 0;
};

struct Components {
    int rows = 0, cols = 0;
    std::vector<int> labels;  // rows*cols, component id or 0
    std::vector<ComponentStats> stats;
};

namespace detail {

inline int uf_find(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] =
            parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

inline void uf_union(std::vector<int>& parent, int a, int b) {
    a = uf_find(parent, a);
    b = uf_find(parent, b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
}

}  // namespace detail

inline Components label_components(const SegMask& mask) {
    Components out;
    out.rows = mask.rows;
    out.cols = mask.cols;
    out.labels.assign(static_cast<std::size_t>(mask.rows) * mask.cols, 0);

    std::vector<int> provisional(out.labels.size(), 0);
    std::vector<int> parent(1, 0);  // index 0 unused (background)
    int next = 1;

    auto prov_at = [&](int r, int c) -> int& {
        return provisional[static_cast<std::size_t>(r) * mask.cols + c];
    };
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            if (!mask.at(r, c)) continue;
            int best = 0;
            const int nbr[4][2] = {{r, c - 1}, {r - 1, c - 1}, {r - 1, c}, {r - 1, c + 1}};
            for (const auto& p : nbr) {
                if (p[0] < 0 || p[1] < 0 || p[1] >= mask.cols) continue;
                const int q = prov_at(p[0], p[1]);
                if (!q) continue;
                if (!best)
                    best = q;
                else
                    detail::uf_union(parent, best, q);
            }
            if (!best) {
                best = next++;
                parent.push_back(best);
            } else {
                best = detail::uf_find(parent, best);
            }
            prov_at(r, c) = best;
        }
    }

    // compact roots to scan-order ids and collect stats
    std::vector<int> compact(static_cast<std::size_t>(next), 0);
    int issued = 0;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            const int p = prov_at(r, c);
            if (!p) continue;
            const int root = detail::uf_find(parent, p);
            int& id = compact[static_cast<std::size_t>(root)];
            if (!id) {
                id = ++issued;
                ComponentStats s;
                s.label = id;
                s.area = 0;
                s.min_row = s.max_row = r;
                s.min_col = s.max_col = c;
                out.stats.push_back(s);
            }
            ComponentStats& s = out.stats[static_cast<std::size_t>(id - 1)];
            s.area += 1;
            s.min_row = std::min(s.min_row, r);
            s.max_row = std::max(s.max_row, r);
            s.min_col = std::min(s.min_col, c);
            s.max_col = std::max(s.max_col, c);
            out.labels[static_cast<std::size_t>(r) * mask.cols + c] = id;
        }
    }
    return out;
}

// Zero every component smaller than min_area pixels.
inline SegMask drop_small_components(const SegMask& mask, int min_area) {
    auto comps = label_components(mask);
    SegMask out = mask;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            const int id = comps.labels[static_cast<std::size_t>(r) * mask.cols + c];
            if (id && comps.stats[static_cast<std::size_t>(id - 1)].area < min_area)
                out.at(r, c) = 0;
        }
    }
    return out;
}

}  // namespace stmtk

#endif
