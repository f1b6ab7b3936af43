#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gw/shapes/attributes.hpp"

namespace gw::shapes {

inline constexpr std::size_t kImageSide = 32;

struct Image {
    std::size_t width = kImageSide, height = kImageSide;
    std::vector<Rgb> pixels = std::vector<Rgb>(kImageSide * kImageSide);

    Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    const Rgb& at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    friend bool operator==(const Image&, const Image&) = default;

    std::size_t count_background() const {
        return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), Rgb{}));
    }

    // Binary P6.
    std::string to_ppm() const {
        std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
        for (const Rgb& p : pixels) {
            out.push_back(static_cast<char>(p.r));
            out.push_back(static_cast<char>(p.g));
            out.push_back(static_cast<char>(p.b));
        }
        return out;
    }
};

namespace detail {

struct Point {
    double x, y;
};

// Local frame: u along the heading, v to its right; both scaled by size.
// Rotation is wrapped and snapped to 1e-9 rad so r and r + 2*pi rasterize identically.
inline double raster_angle(double rotation) {
    return wrap_angle(std::round(wrap_angle(rotation) * 1e9) / 1e9);
}

inline Point to_image(const Attributes& a, double u, double v) {
    const double r = raster_angle(a.rotation);
    const double hx = std::sin(r), hy = -std::cos(r);  // heading
    const double rx = -hy, ry = hx;                                       // right-hand side
    return {a.x + a.size * (u * hx + v * rx), a.y + a.size * (u * hy + v * ry)};
}

inline std::vector<Point> outline(const Attributes& a) {
    std::vector<Point> pts;
    switch (a.category) {
        case Category::triangle:
            pts = {to_image(a, 0.5, 0.0), to_image(a, -0.5, 0.3), to_image(a, -0.5, -0.3)};
            break;
        case Category::diamond:
            pts = {to_image(a, 0.5, 0.0), to_image(a, 0.1, 0.25), to_image(a, -0.5, 0.0), to_image(a, 0.1, -0.25)};
            break;
        case Category::egg: {
            // Two half-ellipses sharing the minor axis: a long pointed half ahead,
            // a short round half behind.
            constexpr int kSegments = 48;
            for (int i = 0; i < kSegments; ++i) {
                const double t = 2.0 * std::numbers::pi * i / kSegments;
                const double c = std::cos(t), s = std::sin(t);
                const double u = c >= 0.0 ? 0.5 * c : 0.32 * c;
                pts.push_back(to_image(a, u, 0.3 * s));
            }
            break;
        }
    }
    return pts;
}

}  // namespace detail

// Scanline polygon fill sampled at pixel centers, no anti-aliasing.
inline Image render_image(const Attributes& a) {
    Image img;
    const Rgb color = a.color_bytes();
    const auto poly = detail::outline(a);
    std::vector<double> xs;
    for (std::size_t row = 0; row < img.height; ++row) {
        const double yc = static_cast<double>(row) + 0.5;
        xs.clear();
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& p = poly[i];
            const auto& q = poly[(i + 1) % poly.size()];
            if ((p.y <= yc && q.y > yc) || (q.y <= yc && p.y > yc))
                xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            for (std::size_t col = 0; col < img.width; ++col) {
                const double xc = static_cast<double>(col) + 0.5;
                if (xc >= xs[k] && xc < xs[k + 1]) img.at(col, row) = color;
            }
        }
    }
    return img;
}

}  // namespace gw::shapes
