#ifndef STMTK_SYNTH_HPP
#define STMTK_SYNTH_HPP

// Synthetic STMap scenes with exact ground truth: kinematic vehicle strands
// over a static background texture, optional shadow bands locked to a
// vehicle, and clamped Gaussian sensor noise. Everything is deterministic
// per seed so downstream stages can be verified against closed-form truth.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stmtk/errors.hpp"
#include "stmtk/rng.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/stmap.hpp"
#include "stmtk/traj.hpp"

namespace stmtk {

enum class ProfileKind { constant, stop_and_go };

struct VehicleSpec {
    double entry_time = 0.0;  // seconds
    ProfileKind profile = ProfileKind::constant;
    double speed = 40.0;       // ft/s (constant profile)
    double base_speed = 20.0;  // ft/s (stop-and-go)
    double amplitude = 20.0;   // ft/s, <= base_speed so position never reverses
    double period = 30.0;      // s
    double length = 16.0;      // ft
    Rgb intensity{210, 215, 225};

    // front position, feet past the scanline origin, at tau seconds after entry
    double position(double tau) const {
        if (profile == ProfileKind::constant) return speed * tau;
        const double w = 2.0 * std::acos(-1.0) / period;
        return base_speed * tau - amplitude / w * (std::cos(w * tau) - 1.0);
    }

    double velocity(double tau) const {
        if (profile == ProfileKind::constant) return speed;
        const double w = 2.0 * std::acos(-1.0) / period;
        return base_speed + amplitude * std::sin(w * tau);
    }
};

enum class BackgroundKind { constant, gradient, striped };

struct BackgroundSpec {
    BackgroundKind kind = BackgroundKind::constant;
    Rgb base{70, 75, 85};
    Rgb alt{120, 125, 135};  // gradient far end / stripe color
    int period = 16;         // stripe spacing in rows
    int width = 2;           // stripe thickness in rows
};

inline Rgb background_color(const BackgroundSpec& bg, int row, int n) {
    switch (bg.kind) {
        case BackgroundKind::constant:
            return bg.base;
        case BackgroundKind::gradient: {
            const double t = n > 1 ? static_cast<double>(row) / (n - 1) : 0.0;
            Rgb out;
            for (int ch = 0; ch < 3; ++ch)
                out[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(std::lround(
                    (1.0 - t) * bg.base[static_cast<std::size_t>(ch)] +
                    t * bg.alt[static_cast<std::size_t>(ch)]));
            return out;
        }
        default:
            return (row % bg.period) < bg.width ? bg.alt : bg.base;
    }
}

struct ShadowBand {
    int vehicle = 0;         // index into SceneSpec.vehicles
    double offset_ft = -8.0; // lateral shift of the band relative to the vehicle
    double delta = -0.3;     // intensity change in [0,1] units
};

struct SceneSpec {
    int n = 128;
    int m = 600;
    double frame_rate = 10.0;
    BackgroundSpec background;
    std::vector<VehicleSpec> vehicles;
    std::vector<ShadowBand> shadow_bands;
    double noise_sigma = 0.02;  // [0,1] units
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 2 || m < 2) throw SpecOutOfRange("scene needs n >= 2 and m >= 2");
        if (!(frame_rate > 0.0)) throw SpecOutOfRange("frame_rate must be positive");
        if (noise_sigma < 0.0) throw SpecOutOfRange("noise_sigma must be >= 0");
        const double duration = m / frame_rate;
        for (std::size_t i = 0; i < vehicles.size(); ++i) {
            const auto& v = vehicles[i];
            if (v.entry_time < 0.0 || v.entry_time > duration)
                throw SpecOutOfRange("vehicle " + std::to_string(i) +
                                     " entry_time outside scene duration");
            if (!(v.length > 0.0))
                throw SpecOutOfRange("vehicle " + std::to_string(i) + " length must be > 0");
            if (v.profile == ProfileKind::constant) {
                if (v.speed < 0.0)
                    throw SpecOutOfRange("vehicle " + std::to_string(i) + " speed < 0");
            } else {
                if (v.amplitude < 0.0 || v.amplitude > v.base_speed || !(v.period > 0.0))
                    throw SpecOutOfRange("vehicle " + std::to_string(i) +
                                         " stop-and-go wave would reverse");
            }
        }
        for (const auto& s : shadow_bands)
            if (s.vehicle < 0 || s.vehicle >= static_cast<int>(vehicles.size()))
                throw SpecOutOfRange("shadow band references missing vehicle");
    }
};

struct GroundTruth {
    SegMask truth_mask;  // source = synthetic_truth
    std::vector<WorldTrajectory> truth_trajectories;
    GrayMap background_plate;  // noise-free, vehicle-free luma plane
};

struct SynthResult {
    STMap stmap;
    GroundTruth truth;
};

inline SynthResult generate(const SceneSpec& spec, const CalibrationTable& cal) {
    spec.validate();
    cal.validate();
    if (cal.pixel_range_lo() > 0.0 || cal.pixel_range_hi() < spec.n - 1)
        throw SpecOutOfRange("calibration does not cover the scanline rows");

    std::vector<double> dist(static_cast<std::size_t>(spec.n));
    for (int r = 0; r < spec.n; ++r) dist[static_cast<std::size_t>(r)] = pixel_to_distance(cal, r);
    const double d_lo = *std::min_element(dist.begin(), dist.end());
    const double d_hi = *std::max_element(dist.begin(), dist.end());

    SynthResult out;
    out.stmap = STMap(spec.n, spec.m, spec.frame_rate, "synthetic");
    out.truth.truth_mask = SegMask(spec.n, spec.m, MaskSource::synthetic_truth);
    out.truth.background_plate.resize(spec.n, spec.m);

    for (int r = 0; r < spec.n; ++r) {
        const Rgb bg = background_color(spec.background, r, spec.n);
        const double luma = (0.299 * bg[0] + 0.587 * bg[1] + 0.114 * bg[2]) / 255.0;
        for (int t = 0; t < spec.m; ++t) {
            out.stmap.set_rgb(r, t, bg);
            out.truth.background_plate(r, t) = luma;
        }
    }

    // vehicles overwrite the background; truth samples only where the front
    // itself lies on the calibrated scanline, so the lower boundary of the
    // strand is the rasterized front
    for (std::size_t vi = 0; vi < spec.vehicles.size(); ++vi) {
        const auto& v = spec.vehicles[vi];
        WorldTrajectory wt;
        wt.strand_id = static_cast<int>(vi) + 1;
        for (int t = 0; t < spec.m; ++t) {
            const double time = t / spec.frame_rate;
            const double tau = time - v.entry_time;
            if (tau < 0.0) continue;
            const double front = v.position(tau);
            bool any = false;
            for (int r = 0; r < spec.n; ++r) {
                const double d = dist[static_cast<std::size_t>(r)];
                if (d >= front - v.length && d <= front) {
                    out.stmap.set_rgb(r, t, v.intensity);
                    out.truth.truth_mask.at(r, t) = 1;
                    any = true;
                }
            }
            if (any && front >= d_lo && front <= d_hi)
                wt.samples.push_back({time, front});
        }
        out.truth.truth_trajectories.push_back(std::move(wt));
    }

    // shadows darken only non-vehicle pixels
    for (const auto& band : spec.shadow_bands) {
        const auto& v = spec.vehicles[static_cast<std::size_t>(band.vehicle)];
        const int delta = static_cast<int>(std::lround(band.delta * 255.0));
        for (int t = 0; t < spec.m; ++t) {
            const double tau = t / spec.frame_rate - v.entry_time;
            if (tau < 0.0) continue;
            const double front = v.position(tau) + band.offset_ft;
            for (int r = 0; r < spec.n; ++r) {
                if (out.truth.truth_mask.at(r, t)) continue;
                const double d = dist[static_cast<std::size_t>(r)];
                if (d >= front - v.length && d <= front) {
                    for (int ch = 0; ch < 3; ++ch) {
                        const int val = out.stmap.at(r, t, ch) + delta;
                        out.stmap.at(r, t, ch) =
                            static_cast<std::uint8_t>(std::clamp(val, 0, 255));
                    }
                }
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        Rng rng(spec.seed);
        const double sigma = spec.noise_sigma * 255.0;
        for (int r = 0; r < spec.n; ++r) {
            for (int t = 0; t < spec.m; ++t) {
                for (int ch = 0; ch < 3; ++ch) {
                    const double val = out.stmap.at(r, t, ch) + rng.normal(0.0, sigma);
                    out.stmap.at(r, t, ch) = static_cast<std::uint8_t>(
                        std::lround(std::clamp(val, 0.0, 255.0)));
                }
            }
        }
    }
    return out;
}

// --- scene JSON ---------------------------------------------------------------

inline void to_json(nlohmann::json& j, const VehicleSpec& v) {
    j = nlohmann::json{{"entry_time", v.entry_time},
                       {"profile", v.profile == ProfileKind::constant ? "constant"
                                                                      : "stop_and_go"},
                       {"length", v.length},
                       {"intensity", {v.intensity[0], v.intensity[1], v.intensity[2]}}};
    if (v.profile == ProfileKind::constant) {
        j["speed"] = v.speed;
    } else {
        j["base_speed"] = v.base_speed;
        j["amplitude"] = v.amplitude;
        j["period"] = v.period;
    }
}

inline void from_json(const nlohmann::json& j, VehicleSpec& v) {
    v.entry_time = j.value("entry_time", 0.0);
    const std::string profile = j.value("profile", "constant");
    if (profile == "constant")
        v.profile = ProfileKind::constant;
    else if (profile == "stop_and_go")
        v.profile = ProfileKind::stop_and_go;
    else
        throw ParseError("unknown vehicle profile: " + profile);
    v.speed = j.value("speed", 40.0);
    v.base_speed = j.value("base_speed", 20.0);
    v.amplitude = j.value("amplitude", 20.0);
    v.period = j.value("period", 30.0);
    v.length = j.value("length", 16.0);
    if (j.contains("intensity"))
        for (int ch = 0; ch < 3; ++ch)
            v.intensity[static_cast<std::size_t>(ch)] =
                j["intensity"].at(static_cast<std::size_t>(ch)).get<std::uint8_t>();
}

inline void to_json(nlohmann::json& j, const BackgroundSpec& b) {
    const char* kind = b.kind == BackgroundKind::constant
                           ? "constant"
                           : (b.kind == BackgroundKind::gradient ? "gradient" : "striped");
    j = nlohmann::json{{"kind", kind},
                       {"base", {b.base[0], b.base[1], b.base[2]}},
                       {"alt", {b.alt[0], b.alt[1], b.alt[2]}},
                       {"period", b.period},
                       {"width", b.width}};
}

inline void from_json(const nlohmann::json& j, BackgroundSpec& b) {
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant")
        b.kind = BackgroundKind::constant;
    else if (kind == "gradient")
        b.kind = BackgroundKind::gradient;
    else if (kind == "striped")
        b.kind = BackgroundKind::striped;
    else
        throw ParseError("unknown background kind: " + kind);
    if (j.contains("base"))
        for (int ch = 0; ch < 3; ++ch)
            b.base[static_cast<std::size_t>(ch)] = j["base"].at(static_cast<std::size_t>(ch)).get<std::uint8_t>();
    if (j.contains("alt"))
        for (int ch = 0; ch < 3; ++ch)
            b.alt[static_cast<std::size_t>(ch)] = j["alt"].at(static_cast<std::size_t>(ch)).get<std::uint8_t>();
    b.period = j.value("period", 16);
    b.width = j.value("width", 2);
}

inline void to_json(nlohmann::json& j, const ShadowBand& s) {
    j = nlohmann::json{{"vehicle", s.vehicle},
                       {"offset_ft", s.offset_ft},
                       {"delta", s.delta}};
}

inline void from_json(const nlohmann::json& j, ShadowBand& s) {
    s.vehicle = j.value("vehicle", 0);
    s.offset_ft = j.value("offset_ft", -8.0);
    s.delta = j.value("delta", -0.3);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
    j = nlohmann::json{{"n", s.n},
                       {"m", s.m},
                       {"frame_rate", s.frame_rate},
                       {"background", s.background},
                       {"vehicles", s.vehicles},
                       {"shadow_bands", s.shadow_bands},
                       {"noise_sigma", s.noise_sigma},
                       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
    s.n = j.value("n", 128);
    s.m = j.value("m", 600);
    s.frame_rate = j.value("frame_rate", 10.0);
    if (j.contains("background")) s.background = j["background"].get<BackgroundSpec>();
    if (j.contains("vehicles")) s.vehicles = j["vehicles"].get<std::vector<VehicleSpec>>();
    if (j.contains("shadow_bands"))
        s.shadow_bands = j["shadow_bands"].get<std::vector<ShadowBand>>();
    s.noise_sigma = j.value("noise_sigma", 0.02);
    s.seed = j.value("seed", std::uint64_t{1});
}

inline SceneSpec load_scene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open scene spec: " + path);
    nlohmann::json j;
    try {
        f >> j;
        return j.get<SceneSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad scene spec: ") + e.what());
    }
}

inline void save_scene(const std::string& path, const SceneSpec& spec) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write scene spec: " + path);
    nlohmann::json j = spec;
    f << j.dump(2) << "\n";
}

}  // namespace stmtk

#endif
