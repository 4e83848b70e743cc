#ifndef STMTK_DATASET_HPP
#define STMTK_DATASET_HPP

// Labeled tile dataset: crop aligned STMap/mask lists, shuffle, split by
// proportions (largest remainder), and augment the training split. Disk
// layout: images/*.png + masks/*.png + manifest.json.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "stmtk/augment.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/image_io.hpp"
#include "stmtk/rng.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/stmap.hpp"

namespace stmtk {

enum class Split { train, test, validation };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        default: return "validation";
    }
}

inline Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    if (name == "validation") return Split::validation;
    throw ParseError("unknown split name: " + name);
}

struct SplitProportions {
    double train = 0.6, test = 0.2, validation = 0.2;
};

struct LabeledDataset {
    std::vector<TilePair> pairs;
    std::vector<Split> split;  // aligned with pairs
    std::uint64_t seed = 0;
    int tile = 0;
    AugmentSpec augment;

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
};

// Largest-remainder apportionment of n items to the three splits; exact for
// exact divisions, otherwise off by at most one item per split.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitProportions& p) {
    const double props[3] = {p.train, p.test, p.validation};
    const double sum = props[0] + props[1] + props[2];
    if (!(std::abs(sum - 1.0) < 1e-9) || props[0] < 0 || props[1] < 0 || props[2] < 0)
        throw BadProportions("split proportions must be nonnegative and sum to 1");
    std::array<std::size_t, 3> counts{};
    double fracs[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = props[i] * static_cast<double>(n);
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(exact);
        fracs[i] = exact - static_cast<double>(counts[static_cast<std::size_t>(i)]);
        assigned += counts[static_cast<std::size_t>(i)];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (fracs[i] > fracs[best]) best = i;
        counts[static_cast<std::size_t>(best)]++;
        fracs[best] = -1.0;
        ++assigned;
    }
    return counts;
}

inline LabeledDataset assemble_dataset(const std::vector<STMap>& stmaps,
                                       const std::vector<SegMask>& masks, int tile,
                                       const AugmentSpec& augment,
                                       const SplitProportions& proportions,
                                       std::uint64_t seed) {
    if (stmaps.empty()) throw EmptyInput("no maps to assemble");
    if (stmaps.size() != masks.size()) throw ShapeMismatch("map/mask lists differ in length");

    std::vector<TilePair> base;
    for (std::size_t i = 0; i < stmaps.size(); ++i) {
        auto tiles = crop_tiles(stmaps[i], masks[i], tile);
        base.insert(base.end(), std::make_move_iterator(tiles.begin()),
                    std::make_move_iterator(tiles.end()));
    }

    Rng rng(seed);
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    const auto counts = split_counts(base.size(), proportions);
    LabeledDataset ds;
    ds.seed = seed;
    ds.tile = tile;
    ds.augment = augment;
    ds.pairs.reserve(base.size());
    ds.split.reserve(base.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        Split s = Split::validation;
        if (pos < counts[0])
            s = Split::train;
        else if (pos < counts[0] + counts[1])
            s = Split::test;
        ds.pairs.push_back(base[order[pos]]);
        ds.split.push_back(s);
    }

    // augmented variants extend the training split only
    if (augment.enabled()) {
        const std::size_t n_base = ds.pairs.size();
        for (std::size_t i = 0; i < n_base; ++i) {
            if (ds.split[i] != Split::train) continue;
            for (int k = 0; k < augment.copies; ++k) {
                const TileTransform t = draw_transform(augment, tile, rng);
                TilePair aug;
                aug.origin_row = ds.pairs[i].origin_row;
                aug.origin_col = ds.pairs[i].origin_col;
                aug.augmented = true;
                aug.image = warp_image(ds.pairs[i].image, t);
                aug.mask = warp_mask(ds.pairs[i].mask, t);
                ds.pairs.push_back(std::move(aug));
                ds.split.push_back(Split::train);
            }
        }
    }
    return ds;
}

inline void save_dataset(const std::string& dir, const LabeledDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    nlohmann::json manifest;
    manifest["seed"] = ds.seed;
    manifest["tile"] = ds.tile;
    manifest["augment"] = ds.augment;
    nlohmann::json splits = {{"train", nlohmann::json::array()},
                             {"test", nlohmann::json::array()},
                             {"validation", nlohmann::json::array()}};
    char name[32];
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_png((fs::path(dir) / "images" / name).string(), ds.pairs[i].image);
        save_mask_png((fs::path(dir) / "masks" / name).string(), ds.pairs[i].mask);
        splits[split_name(ds.split[i])].push_back(name);
    }
    manifest["splits"] = splits;
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

inline LabeledDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad manifest: ") + e.what());
    }
    LabeledDataset ds;
    ds.seed = manifest.value("seed", std::uint64_t{0});
    ds.tile = manifest.value("tile", 0);
    if (manifest.contains("augment")) ds.augment = manifest["augment"].get<AugmentSpec>();

    std::vector<std::pair<std::string, Split>> entries;
    for (const char* sname : {"train", "test", "validation"}) {
        if (!manifest["splits"].contains(sname)) continue;
        for (const auto& item : manifest["splits"][sname])
            entries.emplace_back(item.get<std::string>(), split_from_name(sname));
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, split] : entries) {
        TilePair p;
        p.image = read_png((fs::path(dir) / "images" / name).string());
        p.mask = load_mask_png((fs::path(dir) / "masks" / name).string());
        if (p.mask.rows != p.image.rows || p.mask.cols != p.image.cols)
            throw ShapeMismatch("image/mask shape mismatch for " + name);
        ds.pairs.push_back(std::move(p));
        ds.split.push_back(split);
    }
    return ds;
}

}  // namespace stmtk

#endif
