#include "cli.hpp"

#include "dipmatte/engine.hpp"
#include "dipmatte/eval.hpp"
#include "dipmatte/image_io.hpp"
#include "dipmatte/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace dipmatte::cli {
namespace {

namespace fs = std::filesystem;

struct EngineFlags {
    int iters = 4000;
    double lr = 1e-3;
    std::optional<double> loss_threshold;
    std::uint64_t seed = 0;
    std::size_t depth = 4;
    std::vector<std::size_t> channels;
    int snapshot_every = 0;
    bool f64_gradcheck = false;
    std::string warm;
    std::string config;
};

void add_engine_flags(CLI::App& cmd, EngineFlags& f) {
    cmd.add_option("--iters", f.iters, "Maximum optimization iterations")->capture_default_str();
    cmd.add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd.add_option("--loss-threshold", f.loss_threshold, "Stop warm-started runs at this total loss");
    cmd.add_option("--seed", f.seed, "Master random seed")->capture_default_str();
    cmd.add_option("--depth", f.depth, "U-net depth (down/up levels)")->capture_default_str();
    cmd.add_option("--channels", f.channels, "Channels per level, comma separated (default 16*2^level)")
        ->delimiter(',');
    cmd.add_option("--snapshot-every", f.snapshot_every, "Write weight snapshots every N iterations (0 = off)")
        ->capture_default_str();
    cmd.add_flag("--f64-gradcheck", f.f64_gradcheck, "Verify gradients in 64-bit precision before optimizing");
    cmd.add_option("--config", f.config, "Flat key=value file with defaults for the flags above");
}

// Values from the file only fill options the command line left unset.
void apply_config_file(CLI::App& cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open config file");
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError(path, "line " + std::to_string(number) + ": expected key=value");
        const auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        const auto key = trim(line.substr(0, eq));
        auto* opt = cmd.get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config")
            throw IoError(path, "line " + std::to_string(number) + ": unknown key '" + key + "'");
        if (opt->count() > 0) continue;
        opt->add_result(trim(line.substr(eq + 1)));
        opt->run_callback();
    }
}

EngineConfig engine_config(const EngineFlags& f) {
    EngineConfig c;
    c.lr = f.lr;
    c.max_iters = f.iters;
    c.loss_threshold = f.loss_threshold;
    c.seed = f.seed;
    c.snapshot_every = f.snapshot_every;
    c.architecture.depth = f.depth;
    if (f.channels.empty()) {
        c.architecture.channels.clear();
        for (std::size_t l = 0; l < f.depth; ++l) c.architecture.channels.push_back(std::size_t{16} << l);
    } else {
        c.architecture.channels = f.channels;
    }
    // The engine attaches its own heads; validate the trunk with a stand-in.
    auto trunk = c.architecture;
    trunk.output_heads = {{"alpha", 1}};
    trunk.validate();
    c.validate();
    return c;
}

int preflight_gradcheck(const EngineFlags& f, std::ostream& out) {
    if (!f.f64_gradcheck) return kSuccess;
    const auto report = gradcheck_suite(f.seed, 1e-3, 2);
    if (!report.passed()) {
        report.print(out);
        return kDivergence;
    }
    out << "gradcheck passed\n";
    return kSuccess;
}

MattingProblem load_problem(const std::string& image_path, const std::string& trimap_path, const EngineConfig& cfg) {
    MattingProblem p{load_image(image_path), load_trimap(trimap_path), cfg};
    if (p.image.dim(1) != p.masks.height || p.image.dim(2) != p.masks.width)
        throw IoError(trimap_path, "trimap is " + std::to_string(p.masks.height) + "x" + std::to_string(p.masks.width) +
                                       " but the image is " + std::to_string(p.image.dim(1)) + "x" +
                                       std::to_string(p.image.dim(2)));
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError(path.string(), "cannot open for writing");
    f << text;
}

void write_result(const fs::path& dir, const MatteResult& r) {
    fs::create_directories(dir);
    save_alpha((dir / "alpha.png").string(), r.alpha);
    save_image((dir / "fg.png").string(), r.fg);
    save_image((dir / "bg.png").string(), r.bg);
    std::ofstream loss(dir / "loss.txt");
    if (!loss) throw IoError((dir / "loss.txt").string(), "cannot open for writing");
    write_loss_history(loss, r.loss_history);
}

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04zu", i);
    return buf;
}

std::vector<fs::path> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) {
            auto ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (ext == ".png") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError(dir, "no .png frames found");
    return files;
}

int cmd_extract(const std::string& image, const std::string& trimap, const std::string& out_dir,
                const EngineFlags& flags, std::ostream& out) {
    const auto cfg = engine_config(flags);
    if (int rc = preflight_gradcheck(flags, out)) return rc;
    const auto problem = load_problem(image, trimap, cfg);
    std::optional<WeightSnapshot> warm;
    if (!flags.warm.empty()) warm = read_snapshot(flags.warm);
    if (!warm && cfg.loss_threshold) out << "note: --loss-threshold only applies to warm-started runs\n";

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    SnapshotCallback on_snapshot;
    if (cfg.snapshot_every > 0) {
        fs::create_directories(dir / "snapshots");
        on_snapshot = [&](int it, const MattingNetworks& nets) {
            char name[48];
            std::snprintf(name, sizeof(name), "weights_iter_%06d.bin", it);
            write_snapshot((dir / "snapshots" / name).string(), nets.snapshot());
        };
    }
    const auto result = extract_matte(problem, warm ? &*warm : nullptr, on_snapshot);
    write_result(dir, result);
    write_snapshot((dir / "weights.bin").string(), result.weights);
    out << "iterations=" << result.iterations_run << "\nfinal_loss=" << result.loss_history.back().total << '\n';
    return kSuccess;
}

int cmd_video(const std::string& frames_dir, const std::string& trimaps_dir, const std::string& out_dir,
              const EngineFlags& flags, std::ostream& out) {
    const auto cfg = engine_config(flags);
    if (int rc = preflight_gradcheck(flags, out)) return rc;
    const auto frames = list_images(frames_dir);
    const auto trimaps = list_images(trimaps_dir);
    if (frames.size() != trimaps.size())
        throw IoError(trimaps_dir, std::to_string(trimaps.size()) + " trimaps for " + std::to_string(frames.size()) +
                                       " frames");
    std::vector<MattingProblem> problems;
    for (std::size_t i = 0; i < frames.size(); ++i)
        problems.push_back(load_problem(frames[i].string(), trimaps[i].string(), cfg));

    const auto results = extract_video(problems);
    const fs::path dir(out_dir);
    std::string summary = "frame, iterations, final_loss\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        write_result(dir / frame_name(i), results[i]);
        summary += std::to_string(i) + ", " + std::to_string(results[i].iterations_run) + ", " +
                   std::to_string(results[i].loss_history.back().total) + "\n";
        out << frame_name(i) << " iterations=" << results[i].iterations_run << '\n';
    }
    write_text(dir / "iterations.txt", summary);
    write_snapshot((dir / "weights.bin").string(), results.back().weights);
    return kSuccess;
}

int cmd_composite(const std::string& alpha_path, const std::string& fg_path, const std::string& bg_path,
                  const std::string& out_path, std::ostream& out) {
    const auto alpha = load_alpha(alpha_path);
    const auto fg = load_image(fg_path);
    const auto bg = load_image(bg_path);
    if (fg.shape() != bg.shape() || fg.dim(1) != alpha.dim(1) || fg.dim(2) != alpha.dim(2))
        throw IoError(bg_path, "alpha, foreground and background sizes differ");
    save_image(out_path, composite(alpha, fg, bg));
    out << "wrote " << out_path << '\n';
    return kSuccess;
}

int cmd_synth(const std::string& kind, const std::vector<std::size_t>& size, int band, std::uint64_t seed,
              const std::string& out_dir, std::ostream& out) {
    const std::size_t h = size.at(0), w = size.size() > 1 ? size[1] : size[0];
    const auto c = synth_case(parse_shape_kind(kind), h, w, band, seed);
    write_case(out_dir, c);
    out << "kind=" << kind << "\nunknown_pixels=" << c.trimap.unknown.count() << '\n';
    return kSuccess;
}

int cmd_eval(const std::string& alpha_path, const std::string& gt_path, const std::string& trimap_path,
             const std::string& summary_path, std::ostream& out) {
    const auto alpha = load_alpha(alpha_path);
    const auto gt = load_alpha(gt_path);
    const auto masks = load_trimap(trimap_path);
    if (alpha.shape() != gt.shape()) throw IoError(gt_path, "ground truth size differs from the estimated alpha");
    if (alpha.dim(1) != masks.height || alpha.dim(2) != masks.width)
        throw IoError(trimap_path, "trimap size differs from the estimated alpha");

    nlohmann::json summary;
    const auto report = [&](const std::string& name, const PixelMask& region) {
        if (region.count() == 0) {
            out << name << ".pixels=0\n";
            summary[name] = {{"pixels", 0}};
            return;
        }
        const auto m = region_metrics(alpha, gt, region);
        out << name << ".pixels=" << m.pixels << '\n'
            << name << ".sad=" << m.sad << '\n'
            << name << ".sad_per_pixel=" << m.sad_per_pixel << '\n'
            << name << ".mse=" << m.mse << '\n';
        summary[name] = {{"pixels", m.pixels}, {"sad", m.sad}, {"sad_per_pixel", m.sad_per_pixel}, {"mse", m.mse}};
    };
    report("unknown", masks.unknown);
    report("all", PixelMask(masks.height, masks.width, true));
    if (!summary_path.empty()) write_text(summary_path, summary.dump(2) + "\n");
    return kSuccess;
}

int cmd_gradcheck(std::uint64_t seed, int points, std::ostream& out) {
    const auto report = gradcheck_suite(seed, 1e-3, points);
    report.print(out);
    return report.passed() ? kSuccess : kDivergence;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Alpha mattes from one image and trimap via three jointly optimized untrained U-nets"};
    app.require_subcommand(1);
    app.allow_config_extras(false);

    EngineFlags engine;
    std::string image, trimap, out_dir, frames_dir, trimaps_dir;
    auto* extract = app.add_subcommand("extract", "Extract alpha, foreground and background from an image + trimap");
    extract->add_option("image", image, "Input image (PNG)")->required();
    extract->add_option("trimap", trimap, "Trimap (PNG; <64 background, >191 foreground)")->required();
    extract->add_option("out_dir", out_dir, "Output directory")->required();
    extract->add_option("--warm", engine.warm, "Warm-start from a weights.bin snapshot");
    add_engine_flags(*extract, engine);

    auto* video = app.add_subcommand("video", "Warm-started matte extraction over numbered frames");
    video->add_option("frames_dir", frames_dir, "Directory of frame PNGs (sorted by name)")->required();
    video->add_option("trimaps_dir", trimaps_dir, "Directory of trimap PNGs (sorted by name)")->required();
    video->add_option("out_dir", out_dir, "Output directory")->required();
    add_engine_flags(*video, engine);

    std::string alpha, fg, new_bg, out_path;
    auto* comp = app.add_subcommand("composite", "Composite a foreground over a new background");
    comp->add_option("alpha", alpha, "Alpha PNG (8 or 16 bit gray)")->required();
    comp->add_option("fg", fg, "Foreground PNG")->required();
    comp->add_option("new_bg", new_bg, "Background PNG")->required();
    comp->add_option("out", out_path, "Output PNG")->required();

    std::string kind;
    std::vector<std::size_t> size{64};
    int band = 4;
    std::uint64_t seed = 0;
    auto* synth = app.add_subcommand("synth", "Write a synthetic case with exact ground truth");
    synth->add_option("kind", kind, "disk, strands or holed_ring")
        ->required()
        ->check(CLI::IsMember({"disk", "strands", "holed_ring"}));
    synth->add_option("out_dir", out_dir, "Output directory")->required();
    synth->add_option("--size", size, "Image size: N or H,W")->delimiter(',')->expected(1, 2)->capture_default_str();
    synth->add_option("--band", band, "Trimap erosion radius in pixels")->capture_default_str();
    synth->add_option("--seed", seed, "Random seed")->capture_default_str();

    std::string gt_alpha, summary;
    auto* ev = app.add_subcommand("eval", "SAD / MSE of an alpha matte against ground truth");
    ev->add_option("alpha", alpha, "Estimated alpha PNG")->required();
    ev->add_option("gt_alpha", gt_alpha, "Ground-truth alpha PNG")->required();
    ev->add_option("trimap", trimap, "Trimap PNG")->required();
    ev->add_option("--summary", summary, "Also write the metrics as JSON to this file");

    int points = 10;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference verification of every gradient (64-bit)");
    gc->add_option("--seed", seed, "Random seed")->capture_default_str();
    gc->add_option("--points", points, "Random points per operation")->capture_default_str()->check(CLI::PositiveNumber);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kSuccess : kUsage;
    }

    try {
        for (auto* cmd : {extract, video})
            if (*cmd && !engine.config.empty()) apply_config_file(*cmd, engine.config);
        if (*extract) return cmd_extract(image, trimap, out_dir, engine, out);
        if (*video) return cmd_video(frames_dir, trimaps_dir, out_dir, engine, out);
        if (*comp) return cmd_composite(alpha, fg, new_bg, out_path, out);
        if (*synth) return cmd_synth(kind, size, band, seed, out_dir, out);
        if (*ev) return cmd_eval(alpha, gt_alpha, trimap, summary, out);
        if (*gc) return cmd_gradcheck(seed, points, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}

} // namespace dipmatte::cli
