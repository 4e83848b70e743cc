#ifndef STMTK_METRICS_HPP
#define STMTK_METRICS_HPP

// Segmentation and trajectory scoring: per-class accuracy, Jaccard index,
// boundary F1, trajectory MAE over the common time window, and greedy
// trajectory matching with TPR/FPR.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "stmtk/errors.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/traj.hpp"

namespace stmtk {

// class 0 = background, class 1 = vehicle strand
struct AccuracyScore {
    std::array<double, 2> per_class{1.0, 1.0};
    double global = 1.0;
    double mean = 1.0;
};

inline AccuracyScore pixel_accuracy(const SegMask& pred, const SegMask& truth) {
    if (!pred.same_shape(truth)) throw ShapeMismatch("mask shapes differ");
    std::array<std::int64_t, 2> correct{0, 0}, total{0, 0};
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        const int t = truth.labels[i] ? 1 : 0;
        total[static_cast<std::size_t>(t)]++;
        if ((pred.labels[i] ? 1 : 0) == t) correct[static_cast<std::size_t>(t)]++;
    }
    AccuracyScore out;
    for (int c = 0; c < 2; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        out.per_class[idx] =
            total[idx] > 0 ? static_cast<double>(correct[idx]) / static_cast<double>(total[idx])
                           : 1.0;  // vacuously perfect when the class is absent
    }
    const std::int64_t n = total[0] + total[1];
    out.global = n > 0 ? static_cast<double>(correct[0] + correct[1]) / static_cast<double>(n)
                       : 1.0;
    out.mean = (out.per_class[0] + out.per_class[1]) / 2.0;
    return out;
}

struct JaccardScore {
    std::array<double, 2> per_class{1.0, 1.0};
    std::array<bool, 2> class_absent{false, false};  // absent from both masks -> IoU := 1
    double mean = 1.0;
    double weighted = 1.0;  // truth-pixel-count weights
};

inline JaccardScore jaccard(const SegMask& pred, const SegMask& truth) {
    if (!pred.same_shape(truth)) throw ShapeMismatch("mask shapes differ");
    std::array<std::int64_t, 2> inter{0, 0}, uni{0, 0}, truth_count{0, 0};
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        const int p = pred.labels[i] ? 1 : 0;
        const int t = truth.labels[i] ? 1 : 0;
        truth_count[static_cast<std::size_t>(t)]++;
        for (int c = 0; c < 2; ++c) {
            const auto idx = static_cast<std::size_t>(c);
            if (p == c && t == c) inter[idx]++;
            if (p == c || t == c) uni[idx]++;
        }
    }
    JaccardScore out;
    for (int c = 0; c < 2; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        if (uni[idx] == 0) {
            out.per_class[idx] = 1.0;
            out.class_absent[idx] = true;
        } else {
            out.per_class[idx] =
                static_cast<double>(inter[idx]) / static_cast<double>(uni[idx]);
        }
    }
    out.mean = (out.per_class[0] + out.per_class[1]) / 2.0;
    const std::int64_t n = truth_count[0] + truth_count[1];
    out.weighted = n > 0 ? (out.per_class[0] * static_cast<double>(truth_count[0]) +
                            out.per_class[1] * static_cast<double>(truth_count[1])) /
                               static_cast<double>(n)
                         : 1.0;
    return out;
}

// Label-1 pixels 4-adjacent to a label-0 pixel or to the image edge.
inline std::vector<std::pair<int, int>> boundary_pixels(const SegMask& mask) {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            if (!mask.at(r, c)) continue;
            const bool edge = r == 0 || c == 0 || r == mask.rows - 1 || c == mask.cols - 1;
            if (edge || !mask.at(r - 1, c) || !mask.at(r + 1, c) || !mask.at(r, c - 1) ||
                !mask.at(r, c + 1))
                out.emplace_back(r, c);
        }
    }
    return out;
}

inline double default_bf_tolerance(int rows, int cols) {
    return 0.0075 * std::hypot(static_cast<double>(rows), static_cast<double>(cols));
}

namespace detail {

inline double boundary_match_fraction(const std::vector<std::pair<int, int>>& from,
                                      const std::vector<std::pair<int, int>>& to,
                                      double tolerance) {
    if (from.empty()) return 0.0;
    const double tol2 = tolerance * tolerance;
    std::int64_t hit = 0;
    for (const auto& [r, c] : from) {
        for (const auto& [tr, tc] : to) {
            const double dr = r - tr, dc = c - tc;
            if (dr * dr + dc * dc <= tol2) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(from.size());
}

}  // namespace detail

// Boundary F1: harmonic mean of boundary precision and recall at the given
// pixel tolerance. Both boundaries empty -> 1 (identical empty masks score
// perfect); one empty -> 0.
inline double bf_score(const SegMask& pred, const SegMask& truth, double tolerance = -1.0) {
    if (!pred.same_shape(truth)) throw ShapeMismatch("mask shapes differ");
    if (tolerance < 0.0) tolerance = default_bf_tolerance(pred.rows, pred.cols);
    const auto pb = boundary_pixels(pred);
    const auto tb = boundary_pixels(truth);
    if (pb.empty() && tb.empty()) return 1.0;
    const double precision = detail::boundary_match_fraction(pb, tb, tolerance);
    const double recall = detail::boundary_match_fraction(tb, pb, tolerance);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

struct SegScore {
    AccuracyScore accuracy;
    JaccardScore iou;
    double bf = 1.0;
    double bf_tolerance = 0.0;
};

inline SegScore evaluate_segmentation(const SegMask& pred, const SegMask& truth,
                                      double bf_tolerance = -1.0) {
    SegScore out;
    out.accuracy = pixel_accuracy(pred, truth);
    out.iou = jaccard(pred, truth);
    out.bf_tolerance =
        bf_tolerance < 0.0 ? default_bf_tolerance(pred.rows, pred.cols) : bf_tolerance;
    out.bf = bf_score(pred, truth, out.bf_tolerance);
    return out;
}

// MAE over the common time window. Samples align by nearest timestamp within
// half the reference's frame period (smallest positive sample spacing); no
// interpolation.
inline double trajectory_mae(const WorldTrajectory& detected, const WorldTrajectory& truth) {
    if (detected.samples.empty() || truth.samples.empty())
        throw NoOverlap("empty trajectory");
    const double t0 = std::max(detected.samples.front().time_s, truth.samples.front().time_s);
    const double t1 = std::min(detected.samples.back().time_s, truth.samples.back().time_s);
    if (t1 < t0) throw NoOverlap("no common time window");

    double period = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < truth.samples.size(); ++i) {
        const double dt = truth.samples[i].time_s - truth.samples[i - 1].time_s;
        if (dt > 0.0) period = std::min(period, dt);
    }
    if (!std::isfinite(period)) period = t1 - t0 > 0.0 ? t1 - t0 : 1.0;

    double acc = 0.0;
    std::int64_t n = 0;
    std::size_t j = 0;
    for (const auto& d : detected.samples) {
        if (d.time_s < t0 || d.time_s > t1) continue;
        while (j + 1 < truth.samples.size() &&
               std::abs(truth.samples[j + 1].time_s - d.time_s) <=
                   std::abs(truth.samples[j].time_s - d.time_s))
            ++j;
        if (std::abs(truth.samples[j].time_s - d.time_s) > period / 2.0) continue;
        acc += std::abs(d.position_ft - truth.samples[j].position_ft);
        ++n;
    }
    if (n == 0) throw NoOverlap("no aligned samples in the common window");
    return acc / static_cast<double>(n);
}

struct TrajMatch {
    int detected_id = 0;
    int truth_id = 0;
    double mae_ft = 0.0;
};

struct TrajMatchReport {
    std::vector<TrajMatch> pairs;  // greedy assignment, ascending MAE
    int tp = 0, fp = 0, fn = 0;
    double tpr = 1.0, fpr = 0.0;
    double mae_threshold_ft = 15.0;
};

// Greedy one-to-one assignment in ascending MAE order over all pairs with a
// finite MAE; assigned pairs with MAE <= threshold are true positives, every
// other detection a false positive, every unrecovered truth a false negative.
inline TrajMatchReport match_trajectories(const std::vector<WorldTrajectory>& detected,
                                          const std::vector<WorldTrajectory>& truth,
                                          double mae_threshold_ft = 15.0) {
    if (!(mae_threshold_ft > 0.0)) throw InvalidArgument("mae threshold must be positive");
    struct Cand {
        double mae;
        std::size_t d, t;
    };
    std::vector<Cand> cands;
    for (std::size_t d = 0; d < detected.size(); ++d) {
        for (std::size_t t = 0; t < truth.size(); ++t) {
            try {
                cands.push_back({trajectory_mae(detected[d], truth[t]), d, t});
            } catch (const NoOverlap&) {
                // disjoint supports can never match
            }
        }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.mae < b.mae; });

    TrajMatchReport rep;
    rep.mae_threshold_ft = mae_threshold_ft;
    std::vector<char> d_used(detected.size(), 0), t_used(truth.size(), 0);
    for (const auto& c : cands) {
        if (d_used[c.d] || t_used[c.t]) continue;
        d_used[c.d] = t_used[c.t] = 1;
        rep.pairs.push_back({detected[c.d].strand_id, truth[c.t].strand_id, c.mae});
        if (c.mae <= mae_threshold_ft) rep.tp++;
    }
    rep.fp = static_cast<int>(detected.size()) - rep.tp;
    rep.fn = static_cast<int>(truth.size()) - rep.tp;
    rep.tpr = (rep.tp + rep.fn) > 0 ? static_cast<double>(rep.tp) / (rep.tp + rep.fn) : 1.0;
    rep.fpr = (rep.tp + rep.fp) > 0 ? static_cast<double>(rep.fp) / (rep.tp + rep.fp) : 0.0;
    return rep;
}

// --- reports -----------------------------------------------------------------

inline nlohmann::json seg_score_to_json(const SegScore& s) {
    return nlohmann::json{
        {"per_class_accuracy", {s.accuracy.per_class[0], s.accuracy.per_class[1]}},
        {"global_accuracy", s.accuracy.global},
        {"mean_accuracy", s.accuracy.mean},
        {"per_class_iou", {s.iou.per_class[0], s.iou.per_class[1]}},
        {"class_absent", {s.iou.class_absent[0], s.iou.class_absent[1]}},
        {"mean_iou", s.iou.mean},
        {"weighted_iou", s.iou.weighted},
        {"bf_score", s.bf},
        {"bf_tolerance_px", s.bf_tolerance}};
}

inline nlohmann::json traj_report_to_json(const TrajMatchReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : r.pairs)
        pairs.push_back({{"detected_id", p.detected_id},
                         {"truth_id", p.truth_id},
                         {"mae_ft", p.mae_ft}});
    return nlohmann::json{{"pairs", pairs},     {"tp", r.tp},
                          {"fp", r.fp},         {"fn", r.fn},
                          {"tpr", r.tpr},       {"fpr", r.fpr},
                          {"mae_threshold_ft", r.mae_threshold_ft}};
}

inline void write_report_json(const std::string& path, const SegScore* seg,
                              const TrajMatchReport* traj, const nlohmann::json& config) {
    nlohmann::json j;
    if (seg) j["seg"] = seg_score_to_json(*seg);
    if (traj) j["traj"] = traj_report_to_json(*traj);
    j["config"] = config;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

struct SummaryRow {
    std::string lane_id;
    SegScore seg;
};

// one row per lane/scanline for batch runs
inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "lane_id,global_accuracy,mean_accuracy,mean_iou,weighted_iou,bf_score\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.lane_id.c_str(),
                      r.seg.accuracy.global, r.seg.accuracy.mean, r.seg.iou.mean,
                      r.seg.iou.weighted, r.seg.bf);
        f << line;
    }
}

}  // namespace stmtk

#endif
