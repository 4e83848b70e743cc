// End-to-end checks of the command-line front end: each case launches the
// installed binary as a child process, exactly as a user would.

#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stmtk/manifest.hpp"
#include "stmtk/segmask.hpp"
#include "stmtk/stmap.hpp"
#include "stmtk/synth.hpp"
#include "stmtk/traj.hpp"

using namespace stmtk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = STMTK_CLI_PATH;
const std::string kData = STMTK_DATA_DIR;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json load_json(const std::string& path) {
    json j;
    std::ifstream f(path);
    REQUIRE(f.good());
    f >> j;
    return j;
}

// Writes a pipeline config with absolute paths so the test does not depend on
// the child process working directory.
std::string write_pipeline_config(const std::string& dir, int epochs) {
    json cfg;
    cfg["scene"] = kData + "/scene_one_vehicle.json";
    cfg["calibration"] = kData + "/calibration.json";
    cfg["seed"] = 7;
    cfg["labels"] = "auto";
    cfg["net"] = {{"levels", 2},     {"channels", {4, 8}}, {"tile", 32},
                  {"learning_rate", 0.05}, {"momentum", 0.9},   {"batch_size", 3},
                  {"max_epochs", epochs}};
    const std::string path = (fs::path(dir) / "config.json").string();
    std::ofstream f(path);
    f << cfg.dump(2);
    return path;
}

}  // namespace

TEST_CASE("synth writes artifacts every stage can read back", "[cli]") {
    const auto out = fresh_dir("stmtk_cli_synth");
    REQUIRE(run("synth --scene " + kData + "/scene_one_vehicle.json --calibration " + kData +
                "/calibration.json -o " + out) == 0);

    auto map = load_stmap(out + "/stmap.stmp");
    CHECK(map.n == 64);
    CHECK(map.m == 192);
    auto mask = load_mask_png(out + "/truth_mask.png");
    CHECK(mask.rows == map.n);
    CHECK(mask.cols == map.m);
    auto vehicles = read_trajectory_csv(out + "/truth_trajectories.csv");
    REQUIRE(vehicles.size() == 1);
    CHECK(vehicles[0].world.samples.size() > 50);
    auto plate = load_graymap(out + "/background_plate.gmap");
    CHECK(plate.rows() == map.n);

    // manifest lists every artifact with a correct content hash
    auto man = load_json(out + "/synth.manifest.json");
    CHECK(man.at("subcommand") == "synth");
    CHECK(man.at("format_version") == 1);
    REQUIRE(man.at("outputs").size() == 4);
    for (const auto& o : man.at("outputs")) {
        const std::string rel = o.at("path").get<std::string>();
        CHECK(sha256_file((fs::path(out) / rel).string()) == o.at("sha256").get<std::string>());
    }
}

TEST_CASE("pipeline recovers the single synthetic vehicle", "[cli]") {
    const auto out = fresh_dir("stmtk_cli_pipe");
    const auto cfg = write_pipeline_config(out, 8);
    REQUIRE(run("pipeline --config " + cfg + " -o " + out) == 0);

    auto report = load_json(out + "/report.json");
    CHECK(report.at("traj").at("tp") == 1);
    CHECK(report.at("traj").at("fp") == 0);
    CHECK(report.at("traj").at("fn") == 0);
    CHECK(report.at("seg").at("mean_iou").get<double>() > 0.5);

    // every chained stage left its artifact behind
    for (const char* name :
         {"stmap.stmp", "truth_mask.png", "modes.dmdm", "diagnostics.csv", "spectrum.png",
          "background.gmap", "foreground.gmap", "auto_mask.png", "history.csv", "model.runp",
          "predicted_mask.png", "detected_trajectories.csv", "summary.csv", "overlay.png",
          "pipeline.manifest.json"})
        CHECK(fs::exists(fs::path(out) / name));
}

TEST_CASE("dmd on a static scene leaves no foreground", "[cli]") {
    const auto out = fresh_dir("stmtk_cli_static");
    SceneSpec spec;
    spec.n = 32;
    spec.m = 60;
    spec.noise_sigma = 0.0;
    spec.background.kind = BackgroundKind::striped;
    CalibrationTable cal;
    cal.anchors = {{0, 0.0}, {31, 62.0}};
    cal.frame_rate = spec.frame_rate;
    auto result = generate(spec, cal);
    REQUIRE(result.truth.truth_mask.labels ==
            std::vector<std::uint8_t>(static_cast<std::size_t>(32 * 60), 0));
    save_stmap(out + "/static.stmp", result.stmap);

    REQUIRE(run("dmd --stmap " + out + "/static.stmp -o " + out) == 0);
    auto fg = load_graymap(out + "/foreground.gmap");
    CHECK(fg.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("re-running a subcommand reproduces every byte", "[cli]") {
    const auto a = fresh_dir("stmtk_cli_rerun_a");
    const auto b = fresh_dir("stmtk_cli_rerun_b");
    const std::string args = "synth --scene " + kData + "/scene_benchmark.json --calibration " +
                             kData + "/calibration.json -o ";
    REQUIRE(run(args + a) == 0);
    REQUIRE(run(args + b) == 0);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    REQUIRE(names.size() == 5);
    for (const auto& name : names) {
        INFO(name);
        CHECK(slurp(a + "/" + name) == slurp(b + "/" + name));
    }
}

TEST_CASE("exit codes separate usage, input, and runtime failures", "[cli]") {
    CHECK(run("") == 1);                                  // no subcommand
    CHECK(run("dmd") == 1);                               // missing required flag
    CHECK(run("dmd --stmap /no/such/file.stmp") == 2);    // input does not exist
    CHECK(run("evaluate -o /tmp") == 2);                  // no scorable pair given

    const auto out = fresh_dir("stmtk_cli_exit");
    std::ofstream(out + "/garbage.stmp") << "not a map";
    CHECK(run("dmd --stmap " + out + "/garbage.stmp -o " + out) == 2);

    // output directory collides with an existing regular file -> runtime error
    std::ofstream(out + "/blocked") << "x";
    CHECK(run("synth --scene " + kData + "/scene_one_vehicle.json --calibration " + kData +
              "/calibration.json -o " + out + "/blocked") == 3);
}

TEST_CASE("environment variable supplies the default output directory", "[cli]") {
    const auto src = fresh_dir("stmtk_cli_env_src");
    REQUIRE(run("synth --scene " + kData + "/scene_one_vehicle.json --calibration " + kData +
                "/calibration.json -o " + src) == 0);

    const auto out = fresh_dir("stmtk_cli_env");
    const std::string env_cmd = "STMTK_OUT=" + out + " " + kCli + " autolabel --stmap " + src +
                                "/stmap.stmp >/dev/null 2>&1";
    const int rc = std::system(env_cmd.c_str());
    REQUIRE(WEXITSTATUS(rc) == 0);
    CHECK(fs::exists(fs::path(out) / "auto_mask.png"));
    CHECK(fs::exists(fs::path(out) / "autolabel.manifest.json"));
}
