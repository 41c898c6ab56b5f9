#include "dipmatte/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace dipmatte {
namespace {

cv::Mat read_raw(const std::string& path, int flags) {
    if (!std::filesystem::exists(path)) throw IoError(path, "no such file");
    cv::Mat m;
    try {
        m = cv::imread(path, flags);
    } catch (const cv::Exception& e) {
        throw IoError(path, std::string("decode failed: ") + e.what());
    }
    if (m.empty()) throw IoError(path, "cannot decode image");
    return m;
}

void write_raw(const std::string& path, const cv::Mat& m) {
    bool ok = false;
    try {
        ok = cv::imwrite(path, m);
    } catch (const cv::Exception& e) {
        throw IoError(path, std::string("encode failed: ") + e.what());
    }
    if (!ok) throw IoError(path, "cannot write image");
}

double depth_scale(const cv::Mat& m, const std::string& path) {
    switch (m.depth()) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    default: throw IoError(path, "unsupported bit depth (expected 8 or 16 bit)");
    }
}

double sample(const cv::Mat& m, int y, int x, int c) {
    if (m.depth() == CV_8U) return m.ptr<std::uint8_t>(y)[x * m.channels() + c];
    return m.ptr<std::uint16_t>(y)[x * m.channels() + c];
}

void require_plane(const Tensor<float>& t, const std::string& path) {
    if (t.ndim() != 3 || t.dim(0) != 1) throw ShapeError(path + ": alpha must be 1 x H x W, got " + shape_str(t.shape()));
}

} // namespace

Tensor<float> load_image(const std::string& path) {
    const cv::Mat m = read_raw(path, cv::IMREAD_COLOR | cv::IMREAD_ANYDEPTH);
    const double scale = depth_scale(m, path);
    const std::size_t h = m.rows, w = m.cols;
    std::vector<float> data(3 * h * w);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            for (int c = 0; c < 3; ++c) // OpenCV stores BGR
                data[(static_cast<std::size_t>(c) * h + y) * w + x] = static_cast<float>(sample(m, y, x, 2 - c) * scale);
    return Tensor<float>(Shape{3, h, w}, std::move(data));
}

void save_image(const std::string& path, const Tensor<float>& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError(path + ": image must be 3 x H x W, got " + shape_str(image.shape()));
    const std::size_t h = image.dim(1), w = image.dim(2);
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
    const auto d = image.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(d[(c * h + y) * w + x], 0.0f, 1.0f);
                m.ptr<std::uint8_t>(static_cast<int>(y))[x * 3 + (2 - c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    write_raw(path, m);
}

TrimapLabel trimap_label(std::uint8_t gray) {
    if (gray < 64) return TrimapLabel::background;
    if (gray > 191) return TrimapLabel::foreground;
    return TrimapLabel::unknown;
}

TrimapMasks load_trimap(const std::string& path) {
    const cv::Mat m = read_raw(path, cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
    const bool wide = m.depth() == CV_16U;
    if (!wide && m.depth() != CV_8U) throw IoError(path, "unsupported trimap bit depth");
    std::vector<TrimapLabel> labels;
    labels.reserve(static_cast<std::size_t>(m.rows) * m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto g = wide ? static_cast<std::uint8_t>(m.ptr<std::uint16_t>(y)[x] >> 8) : m.ptr<std::uint8_t>(y)[x];
            labels.push_back(trimap_label(g));
        }
    return TrimapMasks::from_labels(m.rows, m.cols, labels);
}

void save_trimap(const std::string& path, const TrimapMasks& masks) {
    cv::Mat m(static_cast<int>(masks.height), static_cast<int>(masks.width), CV_8UC1);
    for (std::size_t y = 0; y < masks.height; ++y)
        for (std::size_t x = 0; x < masks.width; ++x) {
            std::uint8_t v = 128;
            if (masks.fg(y, x)) v = 255;
            if (masks.bg(y, x)) v = 0;
            m.ptr<std::uint8_t>(static_cast<int>(y))[x] = v;
        }
    write_raw(path, m);
}

void save_alpha(const std::string& path, const Tensor<float>& alpha) {
    require_plane(alpha, path);
    const std::size_t h = alpha.dim(1), w = alpha.dim(2);
    cv::Mat m(static_cast<int>(h), static_cast<int>(w), CV_16UC1);
    const auto d = alpha.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double v = std::clamp(static_cast<double>(d[y * w + x]), 0.0, 1.0);
            m.ptr<std::uint16_t>(static_cast<int>(y))[x] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    write_raw(path, m);
}

Tensor<float> load_alpha(const std::string& path) {
    const cv::Mat m = read_raw(path, cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
    const double scale = depth_scale(m, path);
    const std::size_t h = m.rows, w = m.cols;
    std::vector<float> data(h * w);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) data[y * w + x] = static_cast<float>(sample(m, y, x, 0) * scale);
    return Tensor<float>(Shape{1, h, w}, std::move(data));
}

} // namespace dipmatte
