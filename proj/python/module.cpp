#include "dipmatte/engine.hpp"
#include "dipmatte/eval.hpp"
#include "dipmatte/image_io.hpp"
#include "dipmatte/snapshot.hpp"
#include "dipmatte/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace dipmatte;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

// numpy uses H x W x 3 images and H x W planes; the core uses C x H x W.
Tensor<float> image_from_numpy(const FloatArray& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an H x W x 3 float array");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    const float* src = a.data();
    std::vector<float> v(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) v[(c * h + y) * w + x] = src[(y * w + x) * 3 + c];
    return Tensor<float>(Shape{3, h, w}, std::move(v));
}

py::array_t<float> image_to_numpy(const Tensor<float>& t) {
    const auto h = t.dim(1), w = t.dim(2);
    py::array_t<float> out({h, w, std::size_t{3}});
    float* dst = out.mutable_data();
    const auto src = t.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) dst[(y * w + x) * 3 + c] = src[(c * h + y) * w + x];
    return out;
}

Tensor<float> plane_from_numpy(const FloatArray& a) {
    if (a.ndim() != 2) throw ShapeError("expected an H x W float array");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    return Tensor<float>(Shape{1, h, w}, std::vector<float>(a.data(), a.data() + h * w));
}

py::array_t<float> plane_to_numpy(const Tensor<float>& t) {
    py::array_t<float> out({t.dim(1), t.dim(2)});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

// Trimaps travel as uint8 gray codes, read with the same bands as trimap PNGs.
TrimapMasks trimap_from_numpy(const ByteArray& a) {
    if (a.ndim() != 2) throw ShapeError("expected an H x W uint8 trimap");
    const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
    std::vector<TrimapLabel> labels(h * w);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = trimap_label(a.data()[i]);
    return TrimapMasks::from_labels(h, w, labels);
}

py::array_t<std::uint8_t> trimap_to_numpy(const TrimapMasks& m) {
    py::array_t<std::uint8_t> out({m.height, m.width});
    auto* dst = out.mutable_data();
    for (std::size_t i = 0; i < m.height * m.width; ++i) dst[i] = m.fg.bits[i] ? 255 : m.bg.bits[i] ? 0 : 128;
    return out;
}

PixelMask mask_from_numpy(const BoolArray& a) {
    if (a.ndim() != 2) throw ShapeError("expected an H x W boolean region");
    PixelMask m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = a.data()[i] ? 1 : 0;
    return m;
}

py::array_t<bool> mask_to_numpy(const PixelMask& m) {
    py::array_t<bool> out({m.height, m.width});
    std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
    return out;
}

py::bytes to_bytes(const WeightSnapshot& s) {
    const auto raw = encode_snapshot(s);
    return py::bytes(reinterpret_cast<const char*>(raw.data()), raw.size());
}

WeightSnapshot from_bytes(const py::bytes& b) {
    const std::string s = b;
    return decode_snapshot(std::vector<std::uint8_t>(s.begin(), s.end()));
}

EngineConfig make_config(int iters, double lr, std::uint64_t seed, std::size_t depth,
                         const std::optional<std::vector<std::size_t>>& channels, std::optional<double> loss_threshold) {
    EngineConfig c;
    c.max_iters = iters;
    c.lr = lr;
    c.seed = seed;
    c.loss_threshold = loss_threshold;
    c.architecture.depth = depth;
    if (channels) {
        c.architecture.channels = *channels;
    } else {
        c.architecture.channels.clear();
        for (std::size_t l = 0; l < depth; ++l) c.architecture.channels.push_back(std::size_t{16} << l);
    }
    return c;
}

py::dict result_to_dict(const MatteResult& r) {
    py::array_t<double> history({r.loss_history.size(), std::size_t{7}});
    auto* h = history.mutable_data();
    for (const auto& b : r.loss_history) {
        for (double t : b.terms()) *h++ = t;
        *h++ = b.total;
    }
    py::dict d;
    d["alpha"] = plane_to_numpy(r.alpha);
    d["fg"] = image_to_numpy(r.fg);
    d["bg"] = image_to_numpy(r.bg);
    d["image"] = image_to_numpy(r.image);
    d["loss_history"] = history;
    d["iterations"] = r.iterations_run;
    d["weights"] = to_bytes(r.weights);
    return d;
}

MattingProblem make_problem(const FloatArray& image, const ByteArray& trimap, const EngineConfig& cfg) {
    return MattingProblem{image_from_numpy(image), trimap_from_numpy(trimap), cfg};
}

} // namespace

PYBIND11_MODULE(_dipmatte, m) {
    m.doc() = "Alpha matting with three jointly optimized untrained U-nets";

    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.attr("LOSS_COLUMNS") = py::make_tuple("L_I", "L_alpha", "L_F", "L_B", "L_c", "L_e", "total");

    m.def(
        "synth_case",
        [](const std::string& kind, std::size_t height, std::size_t width, int band, std::uint64_t seed) {
            const auto c = synth_case(parse_shape_kind(kind), height, width, band, seed);
            py::dict d;
            d["image"] = image_to_numpy(c.image);
            d["trimap"] = trimap_to_numpy(c.trimap);
            d["gt_alpha"] = plane_to_numpy(c.gt_alpha);
            d["gt_fg"] = image_to_numpy(c.gt_fg);
            d["gt_bg"] = image_to_numpy(c.gt_bg);
            d["hole"] = mask_to_numpy(c.hole);
            return d;
        },
        py::arg("kind"), py::arg("height") = 64, py::arg("width") = 64, py::arg("band") = 4, py::arg("seed") = 0,
        "Synthetic case with exact ground truth: image (H,W,3), trimap (H,W) uint8, gt_alpha, gt_fg, gt_bg, hole.");

    m.def(
        "extract_matte",
        [](const FloatArray& image, const ByteArray& trimap, int iters, double lr, std::uint64_t seed,
           std::size_t depth, std::optional<std::vector<std::size_t>> channels, std::optional<py::bytes> warm,
           std::optional<double> loss_threshold) {
            const auto problem = make_problem(image, trimap, make_config(iters, lr, seed, depth, channels, loss_threshold));
            std::optional<WeightSnapshot> start;
            if (warm) start = from_bytes(*warm);
            MatteResult r;
            {
                py::gil_scoped_release release;
                r = extract_matte(problem, start ? &*start : nullptr);
            }
            return result_to_dict(r);
        },
        py::arg("image"), py::arg("trimap"), py::arg("iters") = 4000, py::arg("lr") = 1e-3, py::arg("seed") = 0,
        py::arg("depth") = 4, py::arg("channels") = py::none(), py::arg("warm") = py::none(),
        py::arg("loss_threshold") = py::none(),
        "Optimize the three networks on one image. Returns alpha, fg, bg, image, loss_history, iterations, weights.");

    m.def(
        "extract_video",
        [](const std::vector<FloatArray>& frames, const std::vector<ByteArray>& trimaps, int iters, double lr,
           std::uint64_t seed, std::size_t depth, std::optional<std::vector<std::size_t>> channels,
           std::optional<double> loss_threshold) {
            if (frames.size() != trimaps.size()) throw ShapeError("one trimap per frame is required");
            const auto cfg = make_config(iters, lr, seed, depth, channels, loss_threshold);
            std::vector<MattingProblem> problems;
            for (std::size_t i = 0; i < frames.size(); ++i) problems.push_back(make_problem(frames[i], trimaps[i], cfg));
            std::vector<MatteResult> results;
            {
                py::gil_scoped_release release;
                results = extract_video(problems);
            }
            py::list out;
            for (const auto& r : results) out.append(result_to_dict(r));
            return out;
        },
        py::arg("frames"), py::arg("trimaps"), py::arg("iters") = 4000, py::arg("lr") = 1e-3, py::arg("seed") = 0,
        py::arg("depth") = 4, py::arg("channels") = py::none(), py::arg("loss_threshold") = py::none(),
        "Frame 0 runs cold; later frames warm-start and stop at the loss threshold.");

    m.def(
        "composite",
        [](const FloatArray& alpha, const FloatArray& fg, const FloatArray& bg) {
            return image_to_numpy(composite(plane_from_numpy(alpha), image_from_numpy(fg), image_from_numpy(bg)));
        },
        py::arg("alpha"), py::arg("fg"), py::arg("new_bg"));

    m.def(
        "sad", [](const FloatArray& a, const FloatArray& gt, const BoolArray& region) {
            return sad(plane_from_numpy(a), plane_from_numpy(gt), mask_from_numpy(region));
        },
        py::arg("alpha"), py::arg("gt"), py::arg("region"));
    m.def(
        "mse", [](const FloatArray& a, const FloatArray& gt, const BoolArray& region) {
            return mse(plane_from_numpy(a), plane_from_numpy(gt), mask_from_numpy(region));
        },
        py::arg("alpha"), py::arg("gt"), py::arg("region"));
    m.def(
        "baseline_matte", [](const ByteArray& trimap) { return plane_to_numpy(baseline_matte(trimap_from_numpy(trimap))); },
        py::arg("trimap"), "T on the constrained region, 0.5 on the unknown region.");
    m.def(
        "composite_residual",
        [](const FloatArray& image, const FloatArray& alpha, const FloatArray& fg, const FloatArray& bg,
           const BoolArray& region) {
            return composite_residual(image_from_numpy(image), plane_from_numpy(alpha), image_from_numpy(fg),
                                      image_from_numpy(bg), mask_from_numpy(region));
        },
        py::arg("image"), py::arg("alpha"), py::arg("fg"), py::arg("bg"), py::arg("region"));

    m.def("load_image", [](const std::string& p) { return image_to_numpy(load_image(p)); }, py::arg("path"));
    m.def(
        "save_image", [](const std::string& p, const FloatArray& a) { save_image(p, image_from_numpy(a)); },
        py::arg("path"), py::arg("image"));
    m.def("load_alpha", [](const std::string& p) { return plane_to_numpy(load_alpha(p)); }, py::arg("path"));
    m.def(
        "save_alpha", [](const std::string& p, const FloatArray& a) { save_alpha(p, plane_from_numpy(a)); },
        py::arg("path"), py::arg("alpha"));
    m.def("load_trimap", [](const std::string& p) { return trimap_to_numpy(load_trimap(p)); }, py::arg("path"));

    m.def(
        "gradcheck",
        [](std::uint64_t seed, int points) {
            GradcheckReport r;
            {
                py::gil_scoped_release release;
                r = gradcheck_suite(seed, 1e-3, points);
            }
            py::dict errors;
            for (const auto& e : r.entries) errors[py::str(e.name)] = e.max_rel_error;
            return py::make_tuple(r.passed(), errors);
        },
        py::arg("seed") = 0, py::arg("points") = 10,
        "64-bit finite-difference check of every op. Returns (passed, {op: max relative error}).");
}
