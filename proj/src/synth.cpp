#include "dipmatte/synth.hpp"

#include "dipmatte/engine.hpp"
#include "dipmatte/image_io.hpp"
#include "dipmatte/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace dipmatte {
namespace {

constexpr int kSuper = 4;

struct Point {
    double x, y;
};

// Fraction of the kSuper x kSuper sub-samples of each pixel for which inside(x, y) holds.
template <typename Inside>
std::vector<float> coverage(std::size_t h, std::size_t w, Inside inside) {
    std::vector<float> alpha(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy)
                for (int sx = 0; sx < kSuper; ++sx)
                    hits += inside(x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper) ? 1 : 0;
            alpha[y * w + x] = static_cast<float>(hits) / (kSuper * kSuper);
        }
    return alpha;
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

struct Stroke {
    std::vector<Point> points;
    double half_width;
    double min_x, max_x, min_y, max_y;
};

std::vector<float> strands_alpha(std::size_t h, std::size_t w, Rng& rng) {
    const double m = static_cast<double>(std::min(h, w));
    const Point c{w / 2.0 + rng.uniform(-2, 2), h / 2.0 + rng.uniform(-2, 2)};
    const double core = 0.18 * m;
    const int count = rng.uniform_int(20, 60);
    std::vector<Stroke> strokes;
    for (int s = 0; s < count; ++s) {
        Stroke st;
        st.half_width = rng.uniform(1.0, 2.0) / 2.0;
        double angle = rng.uniform(0, 2 * std::numbers::pi);
        const double length = rng.uniform(0.15, 0.32) * m;
        const double bend = rng.uniform(-0.08, 0.08);
        Point p{c.x + core * 0.8 * std::cos(angle), c.y + core * 0.8 * std::sin(angle)};
        constexpr int kSegments = 16;
        st.points.push_back(p);
        for (int i = 0; i < kSegments; ++i) {
            angle += bend;
            p = {p.x + length / kSegments * std::cos(angle), p.y + length / kSegments * std::sin(angle)};
            st.points.push_back(p);
        }
        st.min_x = st.max_x = st.points[0].x;
        st.min_y = st.max_y = st.points[0].y;
        for (const auto& q : st.points) {
            st.min_x = std::min(st.min_x, q.x);
            st.max_x = std::max(st.max_x, q.x);
            st.min_y = std::min(st.min_y, q.y);
            st.max_y = std::max(st.max_y, q.y);
        }
        strokes.push_back(std::move(st));
    }
    return coverage(h, w, [&](double x, double y) {
        if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= core * core) return true;
        for (const auto& st : strokes) {
            if (x < st.min_x - st.half_width || x > st.max_x + st.half_width || y < st.min_y - st.half_width ||
                y > st.max_y + st.half_width)
                continue;
            for (std::size_t i = 0; i + 1 < st.points.size(); ++i)
                if (segment_distance({x, y}, st.points[i], st.points[i + 1]) <= st.half_width) return true;
        }
        return false;
    });
}

// Smooth field: base colour plus a few low-frequency sinusoids per channel.
std::vector<float> color_field(std::size_t h, std::size_t w, const double base[3], Rng& rng) {
    std::vector<float> out(3 * h * w);
    for (std::size_t c = 0; c < 3; ++c) {
        double fx[3], fy[3], ph[3], amp[3];
        for (int k = 0; k < 3; ++k) {
            fx[k] = rng.uniform(0.5, 2.0) * 2 * std::numbers::pi / w;
            fy[k] = rng.uniform(0.5, 2.0) * 2 * std::numbers::pi / h;
            ph[k] = rng.uniform(0, 2 * std::numbers::pi);
            amp[k] = rng.uniform(0.01, 0.03);
        }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double v = base[c];
                for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
                out[(c * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return out;
}

PixelMask erode(const PixelMask& in, int radius) {
    PixelMask out(in.height, in.width);
    const auto h = static_cast<int>(in.height), w = static_cast<int>(in.width);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool keep = in(y, x);
            for (int dy = -radius; keep && dy <= radius; ++dy)
                for (int dx = -radius; keep && dx <= radius; ++dx) {
                    if (dx * dx + dy * dy > radius * radius) continue;
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    keep = in(yy, xx);
                }
            out.bits[y * w + x] = keep ? 1 : 0;
        }
    return out;
}

} // namespace

std::string to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::disk: return "disk";
    case ShapeKind::strands: return "strands";
    case ShapeKind::holed_ring: return "holed_ring";
    }
    return "unknown";
}

ShapeKind parse_shape_kind(const std::string& name) {
    if (name == "disk") return ShapeKind::disk;
    if (name == "strands") return ShapeKind::strands;
    if (name == "holed_ring") return ShapeKind::holed_ring;
    throw ConfigError("unknown shape kind '" + name + "' (expected disk, strands or holed_ring)");
}

double synth_disk_radius(std::size_t height, std::size_t width) {
    return 0.3125 * static_cast<double>(std::min(height, width));
}

SyntheticCase synth_case(ShapeKind kind, std::size_t height, std::size_t width, int band_px, std::uint64_t seed) {
    if (band_px < 1) throw ConfigError("synth: band must be at least 1 pixel");
    if (height < 32 || width < 32) throw ConfigError("synth: image must be at least 32x32");

    Rng rng(seed);
    const double m = static_cast<double>(std::min(height, width));
    const Point c{width / 2.0 + rng.uniform(-2, 2), height / 2.0 + rng.uniform(-2, 2)};
    const auto dist2 = [c](double x, double y) { return (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y); };

    std::vector<float> alpha;
    double hole_radius = 0;
    switch (kind) {
    case ShapeKind::disk: {
        const double r = synth_disk_radius(height, width);
        alpha = coverage(height, width, [&](double x, double y) { return dist2(x, y) <= r * r; });
        break;
    }
    case ShapeKind::strands: alpha = strands_alpha(height, width, rng); break;
    case ShapeKind::holed_ring: {
        const double outer = 0.4 * m;
        hole_radius = 0.2 * m;
        alpha = coverage(height, width, [&](double x, double y) {
            const double d2 = dist2(x, y);
            return d2 <= outer * outer && d2 >= hole_radius * hole_radius;
        });
        break;
    }
    }

    // Foreground and background colours sit on opposite sides of 0.5 per channel.
    double fg_base[3], bg_base[3];
    for (int ch = 0; ch < 3; ++ch) {
        const double hi = rng.uniform(0.6, 0.9), lo = rng.uniform(0.1, 0.4);
        const bool fg_high = rng.uniform() < 0.5;
        fg_base[ch] = fg_high ? hi : lo;
        bg_base[ch] = fg_high ? lo : hi;
    }

    SyntheticCase out;
    out.seed = seed;
    out.kind = kind;
    out.band_px = band_px;
    out.gt_alpha = Tensor<float>(Shape{1, height, width}, alpha);
    out.gt_fg = Tensor<float>(Shape{3, height, width}, color_field(height, width, fg_base, rng));
    out.gt_bg = Tensor<float>(Shape{3, height, width}, color_field(height, width, bg_base, rng));
    out.image = composite(out.gt_alpha, out.gt_fg, out.gt_bg);

    PixelMask solid(height, width), clear(height, width);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        solid.bits[i] = alpha[i] > 0.999f;
        clear.bits[i] = alpha[i] < 0.001f;
    }
    const auto fg = erode(solid, band_px);
    const auto bg = erode(clear, band_px);
    out.hole = PixelMask(height, width);
    std::vector<TrimapLabel> labels(height * width, TrimapLabel::unknown);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * width + x;
            const bool in_hole = kind == ShapeKind::holed_ring && dist2(x + 0.5, y + 0.5) < hole_radius * hole_radius;
            out.hole.bits[i] = in_hole;
            if (in_hole) continue;
            if (fg.bits[i]) labels[i] = TrimapLabel::foreground;
            else if (bg.bits[i]) labels[i] = TrimapLabel::background;
        }
    out.trimap = TrimapMasks::from_labels(height, width, labels);
    if (out.trimap.fg.count() == 0 || out.trimap.bg.count() == 0)
        throw ConfigError("synth: band of " + std::to_string(band_px) + " px leaves the trimap without " +
                          (out.trimap.fg.count() == 0 ? "foreground" : "background") + " pixels");
    return out;
}

void write_case(const std::string& dir, const SyntheticCase& c) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    save_image((d / "image.png").string(), c.image);
    save_trimap((d / "trimap.png").string(), c.trimap);
    save_alpha((d / "gt_alpha.png").string(), c.gt_alpha);
    save_image((d / "gt_fg.png").string(), c.gt_fg);
    save_image((d / "gt_bg.png").string(), c.gt_bg);
    const auto meta_path = (d / "meta.txt").string();
    std::ofstream meta(meta_path);
    if (!meta) throw IoError(meta_path, "cannot open for writing");
    meta << "seed=" << c.seed << "\nkind=" << to_string(c.kind) << "\nband=" << c.band_px
         << "\nheight=" << c.image.dim(1) << "\nwidth=" << c.image.dim(2) << '\n';
}

} // namespace dipmatte
