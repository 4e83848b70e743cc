// stmtk — scanline trajectory toolkit front end.
//
// One subcommand per pipeline stage plus `pipeline`, which chains them from a
// JSON config. Every subcommand writes its artifacts under one output
// directory (flag --out, else $STMTK_OUT, else the working directory) together
// with a `<name>.manifest.json` listing each output file and its SHA-256.
//
// Exit codes: 0 ok, 1 usage, 2 input/validation, 3 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stmtk/autolabel.hpp"
#include "stmtk/dataset.hpp"
#include "stmtk/dmd.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/image_io.hpp"
#include "stmtk/manifest.hpp"
#include "stmtk/metrics.hpp"
#include "stmtk/nn/checkpoint.hpp"
#include "stmtk/nn/resunet.hpp"
#include "stmtk/nn/train.hpp"
#include "stmtk/plot.hpp"
#include "stmtk/scanline.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/stmap.hpp"
#include "stmtk/synth.hpp"
#include "stmtk/traj.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw stmtk::IoError("cannot create output directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// config plumbing

json net_config_to_json(const stmtk::nn::NetConfig& c) {
    json j;
    j["levels"] = c.levels;
    j["channels"] = c.channels;
    j["tile"] = c.tile;
    j["classes"] = c.classes;
    j["in_channels"] = c.in_channels;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["class_weights"] = c.class_weights;
    j["seed"] = c.seed;
    return j;
}

stmtk::nn::NetConfig net_config_from_json(const json& j, stmtk::nn::NetConfig base) {
    base.levels = j.value("levels", base.levels);
    base.channels = j.value("channels", base.channels);
    base.tile = j.value("tile", base.tile);
    base.classes = j.value("classes", base.classes);
    base.in_channels = j.value("in_channels", base.in_channels);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.momentum = j.value("momentum", base.momentum);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.max_epochs = j.value("max_epochs", base.max_epochs);
    base.class_weights = j.value("class_weights", base.class_weights);
    base.seed = j.value("seed", base.seed);
    return base;
}

// Flags shared by `train` and `pipeline`. Only flags the user actually passed
// override the base config.
struct NetFlags {
    int levels = 0;
    std::vector<int> channels;
    int tile = 0;
    double lr = 0.0;
    double momentum = 0.0;
    int batch = 0;
    int epochs = 0;
    std::uint64_t seed = 0;
    std::vector<double> weights;

    CLI::Option *o_levels = nullptr, *o_channels = nullptr, *o_tile = nullptr, *o_lr = nullptr,
                *o_momentum = nullptr, *o_batch = nullptr, *o_epochs = nullptr, *o_seed = nullptr,
                *o_weights = nullptr;

    void attach(CLI::App* cmd) {
        o_levels = cmd->add_option("--levels", levels, "encoder/decoder level count");
        o_channels = cmd->add_option("--channels", channels, "channel width per level")
                         ->delimiter(',');
        o_tile = cmd->add_option("--tile", tile, "square tile edge in pixels");
        o_lr = cmd->add_option("--lr", lr, "SGD learning rate");
        o_momentum = cmd->add_option("--momentum", momentum, "SGD momentum");
        o_batch = cmd->add_option("--batch", batch, "minibatch size");
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
        o_seed = cmd->add_option("--seed", seed, "RNG seed for init and shuffling");
        o_weights = cmd->add_option("--weights", weights,
                                    "per-class loss weights (default: inverse frequency)")
                        ->delimiter(',');
    }

    stmtk::nn::NetConfig apply(stmtk::nn::NetConfig c) const {
        if (o_levels->count()) c.levels = levels;
        if (o_channels->count()) c.channels = channels;
        if (o_tile->count()) c.tile = tile;
        if (o_lr->count()) c.learning_rate = lr;
        if (o_momentum->count()) c.momentum = momentum;
        if (o_batch->count()) c.batch_size = batch;
        if (o_epochs->count()) c.max_epochs = epochs;
        if (o_seed->count()) c.seed = seed;
        if (o_weights->count()) c.class_weights = weights;
        return c;
    }
};

stmtk::MaskSource mask_source_from_name(const std::string& name) {
    if (name == "manual") return stmtk::MaskSource::manual;
    if (name == "dmd_auto") return stmtk::MaskSource::dmd_auto;
    if (name == "predicted") return stmtk::MaskSource::predicted;
    if (name == "synthetic_truth") return stmtk::MaskSource::synthetic_truth;
    throw stmtk::InvalidArgument("unknown mask source: " + name);
}

// ---------------------------------------------------------------------------
// stage cores shared between single subcommands and `pipeline`

struct DmdSettings {
    double energy = 0.999;
    int rank = 0;  // > 0 wins over energy
    double stationarity_tol = 1e-2;

    stmtk::RankRule rule() const {
        return rank > 0 ? stmtk::RankRule::by_rank(rank) : stmtk::RankRule::by_energy(energy);
    }
};

// modes + diagnostics + spectrum plot + background/foreground planes
void run_dmd_stage(const stmtk::STMap& map, const DmdSettings& s, const std::string& out,
                   stmtk::RunManifest& man) {
    const stmtk::GrayMap gray = stmtk::to_gray(map);
    auto snap = stmtk::make_snapshots(gray, map.frame_rate);
    auto modes = stmtk::compute_dmd(snap, s.rule());
    stmtk::compute_amplitudes(modes, gray.col(0));

    const std::string modes_path = join(out, "modes.dmdm");
    stmtk::save_modes(modes_path, modes);
    man.add_output(modes_path);

    const std::string diag_path = join(out, "diagnostics.csv");
    stmtk::save_diagnostics_csv(diag_path, stmtk::mode_diagnostics(modes));
    man.add_output(diag_path);

    std::vector<stmtk::Complex> eigs(modes.eigenvalues.data(),
                                     modes.eigenvalues.data() + modes.eigenvalues.size());
    const std::string spectrum_path = join(out, "spectrum.png");
    stmtk::write_png(spectrum_path, stmtk::spectrum_plot(eigs, s.stationarity_tol));
    man.add_output(spectrum_path);

    auto split = stmtk::split_background(modes, s.stationarity_tol);
    if (split.no_background_mode)
        std::cerr << "stmtk: warning: no stationary mode within tolerance "
                  << s.stationarity_tol << "\n";
    const std::string bg_path = join(out, "background.gmap");
    stmtk::save_graymap(bg_path, split.background);
    man.add_output(bg_path);
    const std::string fg_path = join(out, "foreground.gmap");
    stmtk::save_graymap(fg_path, stmtk::sparse_foreground(gray, split));
    man.add_output(fg_path);
}

// Full-rank split so every vehicle event keeps its own modes; the residual
// against the stationary plate is what gets thresholded.
stmtk::SegMask autolabel_mask(const stmtk::STMap& map, int min_area, double stationarity_tol) {
    const stmtk::GrayMap gray = stmtk::to_gray(map);
    auto snap = stmtk::make_snapshots(gray, map.frame_rate);
    auto modes = stmtk::compute_dmd(snap, stmtk::RankRule::by_energy(1.0));
    stmtk::compute_amplitudes(modes, gray.col(0));
    auto split = stmtk::split_background(modes, stationarity_tol);
    auto res = stmtk::foreground_to_mask(stmtk::sparse_foreground(gray, split), min_area);
    return res.mask;
}

std::vector<stmtk::TrackedVehicle> extract_vehicles(const stmtk::SegMask& mask,
                                                    const stmtk::CalibrationTable& cal,
                                                    int min_area) {
    std::vector<stmtk::TrackedVehicle> out;
    for (const auto& strand : stmtk::extract_strands(mask, min_area)) {
        stmtk::TrackedVehicle v;
        v.pix = stmtk::lower_boundary(strand, cal.direction_flag);
        v.world = stmtk::to_world(v.pix, cal);
        out.push_back(std::move(v));
    }
    return out;
}

// Truth trajectories carry only world samples; rebuild the pixel track through
// the calibration so they share the trajectory CSV schema.
stmtk::TrackedVehicle tracked_from_world(const stmtk::WorldTrajectory& wt,
                                         const stmtk::CalibrationTable& cal) {
    stmtk::TrackedVehicle v;
    v.world = wt;
    v.pix.strand_id = wt.strand_id;
    for (const auto& s : wt.samples) {
        stmtk::PixelSample p;
        p.frame = static_cast<int>(std::lround(s.time_s * cal.frame_rate));
        p.y_pix = static_cast<int>(std::lround(stmtk::distance_to_pixel(cal, s.position_ft)));
        v.pix.samples.push_back(p);
    }
    return v;
}

std::vector<stmtk::WorldTrajectory> worlds_of(const std::vector<stmtk::TrackedVehicle>& vs) {
    std::vector<stmtk::WorldTrajectory> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(v.world);
    return out;
}

void add_tree_outputs(stmtk::RunManifest& man, const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) man.add_output(f);
}

stmtk::PlotColor color_of(const std::vector<int>& rgb, const char* flag) {
    if (rgb.size() != 3) throw stmtk::InvalidArgument(std::string(flag) + " needs R,G,B");
    for (int v : rgb)
        if (v < 0 || v > 255)
            throw stmtk::InvalidArgument(std::string(flag) + " components must be in [0,255]");
    return {static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
            static_cast<std::uint8_t>(rgb[2])};
}

// ---------------------------------------------------------------------------
// subcommands

struct CommonOpts {
    std::string out;
    void attach(CLI::App* cmd) {
        cmd->add_option("-o,--out", out, "output directory")
            ->envname("STMTK_OUT")
            ->default_val(".");
    }
};

void cmd_build_stmap(const std::string& frames_dir, const std::string& scanline_path, double fps,
                     const std::string& out) {
    ensure_dir(out);
    json cfg = {{"frames_dir", frames_dir}, {"scanline", scanline_path}, {"fps", fps}};
    stmtk::RunManifest man("build-stmap", cfg, out);
    for (const auto& f : stmtk::list_frame_files(frames_dir)) man.add_input(f);
    man.add_input(scanline_path);

    auto frames = stmtk::load_frames(frames_dir);
    auto path = stmtk::load_scanline(scanline_path);
    auto map = stmtk::build_stmap(frames, path, fps);

    const std::string map_path = join(out, "stmap.stmp");
    stmtk::save_stmap(map_path, map);
    man.add_output(map_path);
    man.write(join(out, "build-stmap.manifest.json"));
}

void cmd_dmd(const std::string& stmap_path, const DmdSettings& s, const std::string& out) {
    ensure_dir(out);
    json cfg = {{"stmap", stmap_path},
                {"energy", s.energy},
                {"rank", s.rank},
                {"stationarity_tol", s.stationarity_tol}};
    stmtk::RunManifest man("dmd", cfg, out);
    man.add_input(stmap_path);
    run_dmd_stage(stmtk::load_stmap(stmap_path), s, out, man);
    man.write(join(out, "dmd.manifest.json"));
}

void cmd_autolabel(const std::string& stmap_path, int min_area, double tol,
                   const std::string& out) {
    ensure_dir(out);
    json cfg = {{"stmap", stmap_path}, {"min_area", min_area}, {"stationarity_tol", tol}};
    stmtk::RunManifest man("autolabel", cfg, out);
    man.add_input(stmap_path);

    auto mask = autolabel_mask(stmtk::load_stmap(stmap_path), min_area, tol);
    const std::string mask_path = join(out, "auto_mask.png");
    stmtk::save_mask_png(mask_path, mask);
    man.add_output(mask_path);
    man.write(join(out, "autolabel.manifest.json"));
}

struct DatasetOpts {
    std::vector<std::string> stmaps;
    std::vector<std::string> masks;
    std::string mask_source = "manual";
    int tile = 64;
    std::uint64_t seed = 1;
    double p_train = 0.6, p_test = 0.2, p_validation = 0.2;
    bool aug_rescale = false, aug_shear = false, aug_translate = false;
    int copies = 1;
};

void cmd_dataset(const DatasetOpts& o, const std::string& out) {
    if (o.stmaps.size() != o.masks.size())
        throw stmtk::InvalidArgument("need one --mask per --stmap");
    ensure_dir(out);
    json cfg = {{"stmaps", o.stmaps},       {"masks", o.masks},
                {"mask_source", o.mask_source}, {"tile", o.tile},
                {"seed", o.seed},           {"train", o.p_train},
                {"test", o.p_test},         {"validation", o.p_validation},
                {"rescale", o.aug_rescale}, {"shear", o.aug_shear},
                {"translate", o.aug_translate}, {"copies", o.copies}};
    stmtk::RunManifest man("dataset", cfg, out);

    const auto source = mask_source_from_name(o.mask_source);
    std::vector<stmtk::STMap> maps;
    std::vector<stmtk::SegMask> masks;
    for (std::size_t i = 0; i < o.stmaps.size(); ++i) {
        man.add_input(o.stmaps[i]);
        man.add_input(o.masks[i]);
        maps.push_back(stmtk::load_stmap(o.stmaps[i]));
        masks.push_back(stmtk::load_mask_png(o.masks[i], source));
    }

    stmtk::AugmentSpec aug;
    aug.rescale = o.aug_rescale;
    aug.shear = o.aug_shear;
    aug.translate = o.aug_translate;
    aug.copies = o.copies;
    stmtk::SplitProportions prop{o.p_train, o.p_test, o.p_validation};
    auto ds = stmtk::assemble_dataset(maps, masks, o.tile, aug, prop, o.seed);

    const std::string ds_dir = join(out, "dataset");
    stmtk::save_dataset(ds_dir, ds);
    add_tree_outputs(man, ds_dir);
    man.write(join(out, "dataset.manifest.json"));
}

void cmd_train(const std::string& dataset_dir, const NetFlags& flags, const std::string& out) {
    ensure_dir(out);
    auto ds = stmtk::load_dataset(dataset_dir);

    stmtk::nn::NetConfig base;
    base.tile = ds.tile;  // follow the dataset unless --tile overrides
    const stmtk::nn::NetConfig cfg = flags.apply(base);

    json jcfg = net_config_to_json(cfg);
    jcfg["dataset"] = dataset_dir;
    stmtk::RunManifest man("train", jcfg, out);
    man.add_input((fs::path(dataset_dir) / "manifest.json").string());

    stmtk::nn::ResUNet<double> net(cfg);
    net.init_params(cfg.seed);
    auto result = stmtk::nn::train(net, ds);

    const std::string hist_path = join(out, "history.csv");
    stmtk::nn::write_history_csv(hist_path, result.history);
    man.add_output(hist_path);

    const std::string model_path = join(out, "model.runp");
    auto ck = stmtk::nn::snapshot(net);
    ck.config.class_weights = result.class_weights;  // persist the weights actually used
    stmtk::nn::write_checkpoint(model_path, ck);
    man.add_output(model_path);
    man.write(join(out, "train.manifest.json"));
}

void cmd_segment(const std::string& model_path, const std::string& stmap_path, int stride,
                 const std::string& out) {
    ensure_dir(out);
    json cfg = {{"model", model_path}, {"stmap", stmap_path}, {"stride", stride}};
    stmtk::RunManifest man("segment", cfg, out);
    man.add_input(model_path);
    man.add_input(stmap_path);

    auto ck = stmtk::nn::read_checkpoint(model_path);
    auto net = stmtk::nn::net_from_checkpoint<double>(ck);
    auto map = stmtk::load_stmap(stmap_path);
    auto mask = stmtk::nn::segment(net, stmtk::stmap_canvas(map), stride);

    const std::string mask_path = join(out, "predicted_mask.png");
    stmtk::save_mask_png(mask_path, mask);
    man.add_output(mask_path);
    man.write(join(out, "segment.manifest.json"));
}

void cmd_extract(const std::string& mask_path, const std::string& cal_path, int min_area,
                 const std::string& out) {
    ensure_dir(out);
    json cfg = {{"mask", mask_path}, {"calibration", cal_path}, {"min_area", min_area}};
    stmtk::RunManifest man("extract", cfg, out);
    man.add_input(mask_path);
    man.add_input(cal_path);

    auto mask = stmtk::load_mask_png(mask_path);
    auto cal = stmtk::load_calibration(cal_path);
    auto vehicles = extract_vehicles(mask, cal, min_area);

    const std::string traj_path = join(out, "trajectories.csv");
    stmtk::write_trajectory_csv(traj_path, vehicles);
    man.add_output(traj_path);
    man.write(join(out, "extract.manifest.json"));
}

struct EvaluateOpts {
    std::string pred, truth;          // segmentation pair
    std::string detected, reference;  // trajectory pair
    double bf_tol = -1.0;
    double mae_threshold = 15.0;
    std::string lane = "lane-0";
};

void cmd_evaluate(const EvaluateOpts& o, const std::string& out) {
    const bool have_seg = !o.pred.empty();
    const bool have_traj = !o.detected.empty();
    ensure_dir(out);
    json cfg = {{"pred", o.pred},           {"truth", o.truth},
                {"detected", o.detected},   {"reference", o.reference},
                {"bf_tolerance", o.bf_tol}, {"mae_threshold_ft", o.mae_threshold},
                {"lane", o.lane}};
    stmtk::RunManifest man("evaluate", cfg, out);

    std::optional<stmtk::SegScore> seg;
    if (have_seg) {
        man.add_input(o.pred);
        man.add_input(o.truth);
        seg = stmtk::evaluate_segmentation(stmtk::load_mask_png(o.pred),
                                           stmtk::load_mask_png(o.truth), o.bf_tol);
    }
    std::optional<stmtk::TrajMatchReport> traj;
    if (have_traj) {
        man.add_input(o.detected);
        man.add_input(o.reference);
        traj = stmtk::match_trajectories(worlds_of(stmtk::read_trajectory_csv(o.detected)),
                                         worlds_of(stmtk::read_trajectory_csv(o.reference)),
                                         o.mae_threshold);
    }

    const std::string report_path = join(out, "report.json");
    stmtk::write_report_json(report_path, seg ? &*seg : nullptr, traj ? &*traj : nullptr, cfg);
    man.add_output(report_path);

    if (seg) {
        const std::string summary_path = join(out, "summary.csv");
        stmtk::write_summary_csv(summary_path,
                                 std::vector<stmtk::SummaryRow>{{o.lane, *seg}});
        man.add_output(summary_path);
    }
    man.write(join(out, "evaluate.manifest.json"));
}

// Writes the same artifact formats the live pipeline produces so downstream
// stages cannot tell synthetic inputs from recorded ones.
struct SynthPaths {
    std::string stmap, truth_mask, truth_traj, plate;
};

SynthPaths run_synth_stage(const stmtk::SceneSpec& spec, const stmtk::CalibrationTable& cal,
                           const std::string& out, stmtk::RunManifest& man) {
    auto result = stmtk::generate(spec, cal);
    SynthPaths p;
    p.stmap = join(out, "stmap.stmp");
    stmtk::save_stmap(p.stmap, result.stmap);
    man.add_output(p.stmap);

    p.truth_mask = join(out, "truth_mask.png");
    stmtk::save_mask_png(p.truth_mask, result.truth.truth_mask);
    man.add_output(p.truth_mask);

    std::vector<stmtk::TrackedVehicle> vehicles;
    for (const auto& wt : result.truth.truth_trajectories)
        vehicles.push_back(tracked_from_world(wt, cal));
    p.truth_traj = join(out, "truth_trajectories.csv");
    stmtk::write_trajectory_csv(p.truth_traj, vehicles);
    man.add_output(p.truth_traj);

    p.plate = join(out, "background_plate.gmap");
    stmtk::save_graymap(p.plate, result.truth.background_plate);
    man.add_output(p.plate);
    return p;
}

void cmd_synth(const std::string& scene_path, const std::string& cal_path,
               const std::string& out) {
    ensure_dir(out);
    json cfg = {{"scene", scene_path}, {"calibration", cal_path}};
    stmtk::RunManifest man("synth", cfg, out);
    man.add_input(scene_path);
    man.add_input(cal_path);
    run_synth_stage(stmtk::load_scene(scene_path), stmtk::load_calibration(cal_path), out, man);
    man.write(join(out, "synth.manifest.json"));
}

struct RenderOpts {
    std::string stmap;
    std::vector<std::string> detected;
    std::vector<std::string> reference;
    std::vector<int> detected_rgb{stmtk::kDetectedColor.r, stmtk::kDetectedColor.g,
                                  stmtk::kDetectedColor.b};
    std::vector<int> reference_rgb{stmtk::kReferenceColor.r, stmtk::kReferenceColor.g,
                                   stmtk::kReferenceColor.b};
};

void cmd_render(const RenderOpts& o, const std::string& out) {
    ensure_dir(out);
    json cfg = {{"stmap", o.stmap},
                {"detected", o.detected},
                {"reference", o.reference},
                {"detected_color", o.detected_rgb},
                {"reference_color", o.reference_rgb}};
    stmtk::RunManifest man("render", cfg, out);
    man.add_input(o.stmap);

    auto canvas = stmtk::stmap_canvas(stmtk::load_stmap(o.stmap));
    const auto det_color = color_of(o.detected_rgb, "--detected-color");
    const auto ref_color = color_of(o.reference_rgb, "--reference-color");
    // reference first so detections stay visible where the two coincide
    for (const auto& path : o.reference) {
        man.add_input(path);
        for (const auto& v : stmtk::read_trajectory_csv(path))
            stmtk::draw_pixel_trajectory(canvas, v.pix, ref_color);
    }
    for (const auto& path : o.detected) {
        man.add_input(path);
        for (const auto& v : stmtk::read_trajectory_csv(path))
            stmtk::draw_pixel_trajectory(canvas, v.pix, det_color);
    }

    const std::string png_path = join(out, "overlay.png");
    stmtk::write_png(png_path, canvas);
    man.add_output(png_path);
    man.write(join(out, "render.manifest.json"));
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineConfig {
    // input: either a synthetic scene or a frames directory + scanline
    std::string scene;
    std::string frames_dir;
    std::string scanline;
    double fps = 0.0;
    std::string calibration;  // required
    std::string out_dir;

    std::uint64_t seed = 1;
    DmdSettings dmd;
    int min_area = 50;
    std::string labels = "auto";  // "auto" (DMD labels) or "truth" (synthetic only)

    double p_train = 0.6, p_test = 0.2, p_validation = 0.2;
    stmtk::AugmentSpec augment;

    stmtk::nn::NetConfig net;
    double bf_tol = -1.0;
    double mae_threshold = 15.0;
    bool render = true;
};

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    c.scene = j.value("scene", "");
    c.frames_dir = j.value("frames_dir", "");
    c.scanline = j.value("scanline", "");
    c.fps = j.value("fps", 0.0);
    c.calibration = j.value("calibration", "");
    c.out_dir = j.value("out_dir", "");
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("dmd")) {
        const auto& d = j.at("dmd");
        c.dmd.energy = d.value("energy", c.dmd.energy);
        c.dmd.rank = d.value("rank", c.dmd.rank);
        c.dmd.stationarity_tol = d.value("stationarity_tol", c.dmd.stationarity_tol);
    }
    if (j.contains("autolabel")) c.min_area = j.at("autolabel").value("min_area", c.min_area);
    c.labels = j.value("labels", c.labels);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        c.p_train = d.value("train", c.p_train);
        c.p_test = d.value("test", c.p_test);
        c.p_validation = d.value("validation", c.p_validation);
        c.augment.rescale = d.value("rescale", c.augment.rescale);
        c.augment.shear = d.value("shear", c.augment.shear);
        c.augment.translate = d.value("translate", c.augment.translate);
        c.augment.copies = d.value("copies", c.augment.copies);
    }
    if (j.contains("net")) c.net = net_config_from_json(j.at("net"), c.net);
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.bf_tol = e.value("bf_tolerance", c.bf_tol);
        c.mae_threshold = e.value("mae_threshold_ft", c.mae_threshold);
    }
    c.render = j.value("render", c.render);
    return c;
}

json pipeline_config_to_json(const PipelineConfig& c) {
    json j;
    j["scene"] = c.scene;
    j["frames_dir"] = c.frames_dir;
    j["scanline"] = c.scanline;
    j["fps"] = c.fps;
    j["calibration"] = c.calibration;
    j["seed"] = c.seed;
    j["dmd"] = {{"energy", c.dmd.energy},
                {"rank", c.dmd.rank},
                {"stationarity_tol", c.dmd.stationarity_tol}};
    j["autolabel"] = {{"min_area", c.min_area}};
    j["labels"] = c.labels;
    j["dataset"] = {{"train", c.p_train},
                    {"test", c.p_test},
                    {"validation", c.p_validation},
                    {"rescale", c.augment.rescale},
                    {"shear", c.augment.shear},
                    {"translate", c.augment.translate},
                    {"copies", c.augment.copies}};
    j["net"] = net_config_to_json(c.net);
    j["eval"] = {{"bf_tolerance", c.bf_tol}, {"mae_threshold_ft", c.mae_threshold}};
    j["render"] = c.render;
    return j;
}

void cmd_pipeline(PipelineConfig c, const std::string& out) {
    const bool synthetic = !c.scene.empty();
    if (synthetic == !c.frames_dir.empty())
        throw stmtk::InvalidArgument("config needs exactly one of \"scene\" or \"frames_dir\"");
    if (c.calibration.empty()) throw stmtk::InvalidArgument("config needs \"calibration\"");
    if (c.labels != "auto" && c.labels != "truth")
        throw stmtk::InvalidArgument("labels must be \"auto\" or \"truth\"");
    if (c.labels == "truth" && !synthetic)
        throw stmtk::InvalidArgument("truth labels need a synthetic scene");
    c.net.seed = c.seed;  // one seed drives every stochastic stage
    ensure_dir(out);

    stmtk::RunManifest man("pipeline", pipeline_config_to_json(c), out);
    man.add_input(c.calibration);
    auto cal = stmtk::load_calibration(c.calibration);

    // stage 1: acquire the map (and truth, when synthetic)
    SynthPaths truth_paths;
    stmtk::STMap map;
    if (synthetic) {
        man.add_input(c.scene);
        auto spec = stmtk::load_scene(c.scene);
        truth_paths = run_synth_stage(spec, cal, out, man);
        map = stmtk::load_stmap(truth_paths.stmap);
    } else {
        man.add_input(c.scanline);
        for (const auto& f : stmtk::list_frame_files(c.frames_dir)) man.add_input(f);
        if (!(c.fps > 0.0)) throw stmtk::InvalidArgument("config needs a positive \"fps\"");
        map = stmtk::build_stmap(stmtk::load_frames(c.frames_dir),
                                 stmtk::load_scanline(c.scanline), c.fps);
        const std::string map_path = join(out, "stmap.stmp");
        stmtk::save_stmap(map_path, map);
        man.add_output(map_path);
    }

    // stage 2: spectral split artifacts
    run_dmd_stage(map, c.dmd, out, man);

    // stage 3: automatic labels
    auto auto_mask = autolabel_mask(map, c.min_area, c.dmd.stationarity_tol);
    const std::string auto_mask_path = join(out, "auto_mask.png");
    stmtk::save_mask_png(auto_mask_path, auto_mask);
    man.add_output(auto_mask_path);

    // stage 4: tile dataset
    const stmtk::SegMask labels =
        c.labels == "truth" ? stmtk::load_mask_png(truth_paths.truth_mask,
                                                   stmtk::MaskSource::synthetic_truth)
                            : auto_mask;
    auto ds = stmtk::assemble_dataset({map}, {labels}, c.net.tile, c.augment,
                                      {c.p_train, c.p_test, c.p_validation}, c.seed);
    const std::string ds_dir = join(out, "dataset");
    stmtk::save_dataset(ds_dir, ds);
    add_tree_outputs(man, ds_dir);

    // stage 5: train
    stmtk::nn::ResUNet<double> net(c.net);
    net.init_params(c.net.seed);
    auto result = stmtk::nn::train(net, ds);
    const std::string hist_path = join(out, "history.csv");
    stmtk::nn::write_history_csv(hist_path, result.history);
    man.add_output(hist_path);
    auto ck = stmtk::nn::snapshot(net);
    ck.config.class_weights = result.class_weights;
    const std::string model_path = join(out, "model.runp");
    stmtk::nn::write_checkpoint(model_path, ck);
    man.add_output(model_path);

    // stage 6: segment the full map
    auto pred_mask = stmtk::nn::segment(net, stmtk::stmap_canvas(map));
    const std::string pred_path = join(out, "predicted_mask.png");
    stmtk::save_mask_png(pred_path, pred_mask);
    man.add_output(pred_path);

    // stage 7: trajectories
    auto vehicles = extract_vehicles(pred_mask, cal, c.min_area);
    const std::string traj_path = join(out, "detected_trajectories.csv");
    stmtk::write_trajectory_csv(traj_path, vehicles);
    man.add_output(traj_path);

    // stage 8: score against truth when we have it
    if (synthetic) {
        auto seg = stmtk::evaluate_segmentation(
            pred_mask, stmtk::load_mask_png(truth_paths.truth_mask), c.bf_tol);
        auto truth_vehicles = stmtk::read_trajectory_csv(truth_paths.truth_traj);
        auto traj = stmtk::match_trajectories(worlds_of(vehicles), worlds_of(truth_vehicles),
                                              c.mae_threshold);
        const std::string report_path = join(out, "report.json");
        stmtk::write_report_json(report_path, &seg, &traj, pipeline_config_to_json(c));
        man.add_output(report_path);
        const std::string summary_path = join(out, "summary.csv");
        stmtk::write_summary_csv(summary_path,
                                 std::vector<stmtk::SummaryRow>{{map.lane_id, seg}});
        man.add_output(summary_path);
    }

    // stage 9: overlay plot
    if (c.render) {
        auto canvas = stmtk::stmap_canvas(map);
        if (synthetic)
            for (const auto& v : stmtk::read_trajectory_csv(truth_paths.truth_traj))
                stmtk::draw_pixel_trajectory(canvas, v.pix, stmtk::kReferenceColor);
        for (const auto& v : vehicles)
            stmtk::draw_pixel_trajectory(canvas, v.pix, stmtk::kDetectedColor);
        const std::string png_path = join(out, "overlay.png");
        stmtk::write_png(png_path, canvas);
        man.add_output(png_path);
    }

    man.write(join(out, "pipeline.manifest.json"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stmtk — scanline map vehicle trajectory pipeline"};
    app.require_subcommand(1);

    try {
        // build-stmap
        auto* sb = app.add_subcommand("build-stmap", "stack scanline samples into a map");
        struct {
            std::string frames, scanline;
            double fps = 0.0;
            CommonOpts common;
        } b;
        sb->add_option("--frames", b.frames, "directory of same-sized frame images")
            ->required()
            ->check(CLI::ExistingDirectory);
        sb->add_option("--scanline", b.scanline, "scanline path JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sb->add_option("--fps", b.fps, "frame rate of the source video")
            ->required()
            ->check(CLI::PositiveNumber);
        b.common.attach(sb);
        sb->callback([&] { cmd_build_stmap(b.frames, b.scanline, b.fps, b.common.out); });

        // dmd
        auto* sd = app.add_subcommand("dmd", "spectral background/foreground split");
        struct {
            std::string stmap;
            DmdSettings s;
            CommonOpts common;
        } d;
        sd->add_option("--stmap", d.stmap, "input map (.stmp)")
            ->required()
            ->check(CLI::ExistingFile);
        sd->add_option("--energy", d.s.energy, "cumulative energy fraction for rank choice");
        sd->add_option("--rank", d.s.rank, "fixed truncation rank (overrides --energy)");
        sd->add_option("--tol", d.s.stationarity_tol, "|log lambda| bound for stationary modes");
        d.common.attach(sd);
        sd->callback([&] { cmd_dmd(d.stmap, d.s, d.common.out); });

        // autolabel
        auto* sa = app.add_subcommand("autolabel", "threshold the spectral residual into a mask");
        struct {
            std::string stmap;
            int min_area = 50;
            double tol = 1e-2;
            CommonOpts common;
        } a;
        sa->add_option("--stmap", a.stmap, "input map (.stmp)")
            ->required()
            ->check(CLI::ExistingFile);
        sa->add_option("--min-area", a.min_area, "drop components smaller than this");
        sa->add_option("--tol", a.tol, "|log lambda| bound for stationary modes");
        a.common.attach(sa);
        sa->callback([&] { cmd_autolabel(a.stmap, a.min_area, a.tol, a.common.out); });

        // dataset
        auto* ss = app.add_subcommand("dataset", "tile maps and masks into a labeled dataset");
        DatasetOpts ds_opts;
        CommonOpts ds_common;
        ss->add_option("--stmap", ds_opts.stmaps, "input map (repeatable)")
            ->required()
            ->check(CLI::ExistingFile);
        ss->add_option("--mask", ds_opts.masks, "label mask per map (repeatable)")
            ->required()
            ->check(CLI::ExistingFile);
        ss->add_option("--mask-source", ds_opts.mask_source, "label provenance tag")
            ->check(CLI::IsMember({"manual", "dmd_auto", "predicted", "synthetic_truth"}));
        ss->add_option("--tile", ds_opts.tile, "square tile edge");
        ss->add_option("--seed", ds_opts.seed, "shuffle seed");
        ss->add_option("--train", ds_opts.p_train, "train split fraction");
        ss->add_option("--test", ds_opts.p_test, "test split fraction");
        ss->add_option("--validation", ds_opts.p_validation, "validation split fraction");
        ss->add_flag("--rescale", ds_opts.aug_rescale, "enable rescale augmentation");
        ss->add_flag("--shear", ds_opts.aug_shear, "enable shear augmentation");
        ss->add_flag("--translate", ds_opts.aug_translate, "enable translate augmentation");
        ss->add_option("--copies", ds_opts.copies, "augmented variants per training tile");
        ds_common.attach(ss);
        ss->callback([&] { cmd_dataset(ds_opts, ds_common.out); });

        // train
        auto* st = app.add_subcommand("train", "fit the segmentation network on a dataset");
        struct {
            std::string dataset;
            NetFlags flags;
            CommonOpts common;
        } t;
        st->add_option("--dataset", t.dataset, "dataset directory")
            ->required()
            ->check(CLI::ExistingDirectory);
        t.flags.attach(st);
        t.common.attach(st);
        st->callback([&] { cmd_train(t.dataset, t.flags, t.common.out); });

        // segment
        auto* sg = app.add_subcommand("segment", "run a trained model over a full map");
        struct {
            std::string model, stmap;
            int stride = 0;
            CommonOpts common;
        } g;
        sg->add_option("--model", g.model, "checkpoint (.runp)")
            ->required()
            ->check(CLI::ExistingFile);
        sg->add_option("--stmap", g.stmap, "input map (.stmp)")
            ->required()
            ->check(CLI::ExistingFile);
        sg->add_option("--stride", g.stride, "tile stride (default: half tile)");
        g.common.attach(sg);
        sg->callback([&] { cmd_segment(g.model, g.stmap, g.stride, g.common.out); });

        // extract
        auto* se = app.add_subcommand("extract", "trace per-vehicle trajectories from a mask");
        struct {
            std::string mask, cal;
            int min_area = 50;
            CommonOpts common;
        } e;
        se->add_option("--mask", e.mask, "segmentation mask PNG")
            ->required()
            ->check(CLI::ExistingFile);
        se->add_option("--calibration", e.cal, "pixel-to-feet calibration JSON")
            ->required()
            ->check(CLI::ExistingFile);
        se->add_option("--min-area", e.min_area, "drop strands smaller than this");
        e.common.attach(se);
        se->callback([&] { cmd_extract(e.mask, e.cal, e.min_area, e.common.out); });

        // evaluate
        auto* sv = app.add_subcommand("evaluate", "score masks and/or trajectories");
        EvaluateOpts ev;
        CommonOpts ev_common;
        auto* op_pred = sv->add_option("--pred", ev.pred, "predicted mask PNG")
                            ->check(CLI::ExistingFile);
        sv->add_option("--truth", ev.truth, "reference mask PNG")
            ->check(CLI::ExistingFile)
            ->needs(op_pred);
        op_pred->needs("--truth");
        auto* op_det = sv->add_option("--detected", ev.detected, "detected trajectory CSV")
                           ->check(CLI::ExistingFile);
        sv->add_option("--reference", ev.reference, "reference trajectory CSV")
            ->check(CLI::ExistingFile)
            ->needs(op_det);
        op_det->needs("--reference");
        sv->add_option("--bf-tol", ev.bf_tol, "boundary tolerance px (default: auto)");
        sv->add_option("--mae-threshold", ev.mae_threshold, "match threshold in feet");
        sv->add_option("--lane", ev.lane, "lane id for the summary row");
        ev_common.attach(sv);
        sv->callback([&] {
            if (ev.pred.empty() && ev.detected.empty())
                throw CLI::ValidationError(
                    "evaluate", "need --pred/--truth and/or --detected/--reference");
            cmd_evaluate(ev, ev_common.out);
        });

        // synth
        auto* sy = app.add_subcommand("synth", "render a scene spec into map + ground truth");
        struct {
            std::string scene, cal;
            CommonOpts common;
        } y;
        sy->add_option("--scene", y.scene, "scene spec JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sy->add_option("--calibration", y.cal, "pixel-to-feet calibration JSON")
            ->required()
            ->check(CLI::ExistingFile);
        y.common.attach(sy);
        sy->callback([&] { cmd_synth(y.scene, y.cal, y.common.out); });

        // render
        auto* sr = app.add_subcommand("render", "plot trajectories over a map");
        RenderOpts ro;
        CommonOpts ro_common;
        sr->add_option("--stmap", ro.stmap, "input map (.stmp)")
            ->required()
            ->check(CLI::ExistingFile);
        sr->add_option("--detected", ro.detected, "detected trajectory CSV (repeatable)")
            ->check(CLI::ExistingFile);
        sr->add_option("--reference", ro.reference, "reference trajectory CSV (repeatable)")
            ->check(CLI::ExistingFile);
        sr->add_option("--detected-color", ro.detected_rgb, "R,G,B for detections")
            ->delimiter(',');
        sr->add_option("--reference-color", ro.reference_rgb, "R,G,B for references")
            ->delimiter(',');
        ro_common.attach(sr);
        sr->callback([&] { cmd_render(ro, ro_common.out); });

        // pipeline
        auto* sp = app.add_subcommand("pipeline", "run the whole chain from a JSON config");
        struct {
            std::string config;
            NetFlags flags;
            std::string labels;
            CLI::Option* o_labels = nullptr;
            std::uint64_t seed = 0;
            CLI::Option* o_seed = nullptr;
            CommonOpts common;
        } p;
        sp->add_option("--config", p.config, "pipeline config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        p.flags.attach(sp);
        p.o_labels = sp->add_option("--labels", p.labels, "training label source")
                         ->check(CLI::IsMember({"auto", "truth"}));
        p.o_seed = sp->add_option("--pipeline-seed", p.seed, "seed for every stochastic stage");
        p.common.attach(sp);
        sp->callback([&] {
            std::ifstream f(p.config);
            if (!f) throw stmtk::IoError("cannot open config: " + p.config);
            json j;
            try {
                f >> j;
            } catch (const json::exception& ex) {
                throw stmtk::ParseError(std::string("bad pipeline config: ") + ex.what());
            }
            PipelineConfig cfg = pipeline_config_from_json(j);
            cfg.net = p.flags.apply(cfg.net);
            if (p.o_labels->count()) cfg.labels = p.labels;
            if (p.o_seed->count()) cfg.seed = p.seed;
            // --out beats config's out_dir beats $STMTK_OUT/default
            std::string out = p.common.out;
            if (!sp->get_option("--out")->count() && !cfg.out_dir.empty()) out = cfg.out_dir;
            cmd_pipeline(cfg, out);
        });

        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ValidationError& e) {
        // failed file-existence or range checks are input problems, not usage
        std::cerr << "stmtk: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        std::cerr << "stmtk: " << e.what() << "\n";
        return 1;
    } catch (const stmtk::InputError& e) {
        std::cerr << "stmtk: " << e.what() << "\n";
        return 2;
    } catch (const stmtk::Error& e) {
        std::cerr << "stmtk: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "stmtk: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
