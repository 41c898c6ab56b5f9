#include "cli.hpp"

#include "dipmatte/image_io.hpp"

#include <doctest.h>

#include <json.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dipmatte;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("dipmatte_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "dipmatte");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallNet = {"--depth", "2", "--channels", "8,16", "--seed", "5"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::size_t count_lines(const std::string& path) {
    std::ifstream f(path);
    std::size_t n = 0;
    for (std::string line; std::getline(f, line);) ++n;
    return n;
}

} // namespace

TEST_CASE("cli: help, missing subcommand and unknown flags") {
    const auto help = run({"--help"});
    CHECK(help.code == cli::kSuccess);
    CHECK(help.out.find("extract") != std::string::npos);
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"extract", "--bogus"}).code == cli::kUsage);
    CHECK(run({"synth", "square", "x"}).code == cli::kUsage);
    CHECK(run({"extract", "a.png", "t.png", "out", "--lr", "0"}).code == cli::kUsage);
}

TEST_CASE("cli: missing inputs exit with the I/O code and name the file") {
    TempDir dir;
    const auto missing = dir / "nope.png";
    const auto r = run({"extract", missing, missing, dir / "out", "--iters", "1"});
    CHECK(r.code == cli::kIo);
    CHECK(r.err.find(missing) != std::string::npos);
}

TEST_CASE("cli: synth, extract, eval and composite round trip") {
    TempDir dir;
    REQUIRE(run({"synth", "disk", dir / "case", "--size", "32", "--band", "2", "--seed", "1"}).code == 0);

    const auto ex = run(concat({"extract", dir / "case/image.png", dir / "case/trimap.png", dir / "out", "--iters", "6"},
                               kSmallNet));
    REQUIRE(ex.code == cli::kSuccess);
    CHECK(ex.out.find("iterations=6") != std::string::npos);
    for (const char* name : {"alpha.png", "fg.png", "bg.png", "loss.txt", "weights.bin"})
        CHECK_MESSAGE(fs::exists(dir / ("out/" + std::string(name))), name);
    CHECK(load_alpha(dir / "out/alpha.png").shape() == Shape{1, 32, 32});
    CHECK(load_image(dir / "out/fg.png").shape() == Shape{3, 32, 32});
    CHECK(count_lines(dir / "out/loss.txt") == 6);

    const auto ev = run({"eval", dir / "case/gt_alpha.png", dir / "case/gt_alpha.png", dir / "case/trimap.png",
                         "--summary", dir / "summary.json"});
    REQUIRE(ev.code == cli::kSuccess);
    CHECK(ev.out.find("unknown.sad=0\n") != std::string::npos);
    std::ifstream js(dir / "summary.json");
    const auto summary = nlohmann::json::parse(js);
    CHECK(summary["unknown"]["sad"].get<double>() == 0.0);
    CHECK(summary["all"]["pixels"].get<int>() == 32 * 32);

    const auto comp =
        run({"composite", dir / "out/alpha.png", dir / "out/fg.png", dir / "case/gt_bg.png", dir / "comp.png"});
    CHECK(comp.code == cli::kSuccess);
    CHECK(load_image(dir / "comp.png").shape() == Shape{3, 32, 32});

    // Warm start from the written snapshot with a threshold above any loss stops immediately.
    const auto warm = run(concat({"extract", dir / "case/image.png", dir / "case/trimap.png", dir / "warm", "--iters",
                                  "6", "--warm", dir / "out/weights.bin", "--loss-threshold", "100"},
                                 kSmallNet));
    CHECK(warm.code == cli::kSuccess);
    CHECK(warm.out.find("iterations=1") != std::string::npos);
}

TEST_CASE("cli: config file supplies defaults and flags override it") {
    TempDir dir;
    REQUIRE(run({"synth", "disk", dir / "case", "--size", "32", "--band", "2"}).code == 0);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "iters=3\ndepth=2\nchannels=8,16\n";
    }
    const auto a = run({"extract", dir / "case/image.png", dir / "case/trimap.png", dir / "a", "--config",
                        dir / "run.cfg"});
    REQUIRE(a.code == cli::kSuccess);
    CHECK(a.out.find("iterations=3") != std::string::npos);
    const auto b = run({"extract", dir / "case/image.png", dir / "case/trimap.png", dir / "b", "--config",
                        dir / "run.cfg", "--iters", "2"});
    REQUIRE(b.code == cli::kSuccess);
    CHECK(b.out.find("iterations=2") != std::string::npos);

    {
        std::ofstream bad(dir / "bad.cfg");
        bad << "iterations=3\n";
    }
    const auto c = run({"extract", dir / "case/image.png", dir / "case/trimap.png", dir / "c", "--config",
                        dir / "bad.cfg"});
    CHECK(c.code == cli::kIo);
    CHECK(c.err.find("iterations") != std::string::npos);
}

TEST_CASE("cli: video on duplicated frames warm-starts the later frames") {
    TempDir dir;
    REQUIRE(run({"synth", "disk", dir / "case", "--size", "32", "--band", "2"}).code == 0);
    fs::create_directories(dir / "frames");
    fs::create_directories(dir / "trimaps");
    for (const char* n : {"f0.png", "f1.png"}) {
        fs::copy_file(dir / "case/image.png", dir / ("frames/" + std::string(n)));
        fs::copy_file(dir / "case/trimap.png", dir / ("trimaps/" + std::string(n)));
    }
    const auto r = run(concat({"video", dir / "frames", dir / "trimaps", dir / "out", "--iters", "30"}, kSmallNet));
    REQUIRE(r.code == cli::kSuccess);
    CHECK(r.out.find("frame_0000 iterations=30") != std::string::npos);
    CHECK(fs::exists(dir / "out/frame_0001/alpha.png"));
    CHECK(fs::exists(dir / "out/iterations.txt"));

    std::ifstream summary(dir / "out/iterations.txt");
    std::string header, first, second;
    std::getline(summary, header);
    std::getline(summary, first);
    std::getline(summary, second);
    const auto iters = [](const std::string& line) { return std::stoi(line.substr(line.find(", ") + 2)); };
    CHECK(iters(second) < iters(first));
}

TEST_CASE("cli: gradcheck subcommand passes") {
    const auto r = run({"gradcheck", "--points", "2"});
    CHECK(r.code == cli::kSuccess);
    CHECK(r.out.find("PASS") != std::string::npos);
}
