#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "gw/common/error.hpp"
#include "gw/common/rng.hpp"

namespace gw::shapes {

// One-hot order is fixed: egg, triangle, diamond.
enum class Category : std::uint8_t { egg = 0, triangle = 1, diamond = 2 };
inline constexpr std::size_t kCategoryCount = 3;

inline std::string_view category_name(Category c) {
    switch (c) {
        case Category::egg: return "egg";
        case Category::triangle: return "triangle";
        case Category::diamond: return "diamond";
    }
    return "?";
}

inline Category category_from_name(std::string_view s) {
    if (s == "egg") return Category::egg;
    if (s == "triangle") return Category::triangle;
    if (s == "diamond") return Category::diamond;
    throw ConfigError("unknown shape category '" + std::string(s) + "'");
}

struct ShapeConfig {
    double image_size = 32.0;
    double size_min = 7.0;
    double size_max = 14.0;
    double lightness_min = 0.4;

    double margin() const { return size_max / 2.0; }
    double position_min() const { return margin(); }
    double position_max() const { return image_size - margin(); }

    void validate() const {
        require_config(size_min > 0.0 && size_min < size_max && size_max < image_size,
                       "shape config: need 0 < size_min < size_max < image_size");
        require_config(lightness_min > 0.0 && lightness_min < 1.0, "shape config: lightness_min must be in (0,1)");
    }
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

// x, y, size in pixels (image coordinates, y pointing down); rotation in
// radians, clockwise on screen, 0 = pointing up.
struct Attributes {
    Category category = Category::egg;
    double x = 0.0, y = 0.0;
    double size = 0.0;
    double rotation = 0.0;
    double hue = 0.0, saturation = 0.0, lightness = 0.0;

    std::array<double, 3> rgb() const;  // continuous, each in [0,1]
    Rgb color_bytes() const;
};

inline std::array<double, 3> hsl_to_rgb(double h, double s, double l) {
    auto channel = [&](double n) {
        const double k = std::fmod(n + h * 12.0, 12.0);
        const double a = s * std::min(l, 1.0 - l);
        return l - a * std::max(-1.0, std::min({k - 3.0, 9.0 - k, 1.0}));
    };
    return {channel(0.0), channel(8.0), channel(4.0)};
}

// Inverse of hsl_to_rgb for chromatic colors; hue is 0 when saturation is 0.
inline std::array<double, 3> rgb_to_hsl(double r, double g, double b) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double l = (mx + mn) / 2.0;
    const double d = mx - mn;
    if (d == 0.0) return {0.0, 0.0, l};
    const double s = d / (1.0 - std::abs(2.0 * l - 1.0));
    double h;
    if (mx == r) {
        h = std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        h = (b - r) / d + 2.0;
    } else {
        h = (r - g) / d + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    return {h, s, l};
}

inline std::array<double, 3> Attributes::rgb() const { return hsl_to_rgb(hue, saturation, lightness); }

inline Rgb Attributes::color_bytes() const {
    const auto c = rgb();
    auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {byte(c[0]), byte(c[1]), byte(c[2])};
}

inline double wrap_angle(double r) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    r = std::fmod(r, two_pi);
    if (r < 0.0) r += two_pi;
    if (r >= two_pi) r = 0.0;
    return r;
}

// Every field drawn uniformly from its declared range.
inline Attributes sample_attributes(Rng& rng, const ShapeConfig& cfg) {
    cfg.validate();
    Attributes a;
    a.category = static_cast<Category>(uniform_index(rng, kCategoryCount));
    a.x = uniform(rng, cfg.position_min(), cfg.position_max());
    a.y = uniform(rng, cfg.position_min(), cfg.position_max());
    a.size = uniform(rng, cfg.size_min, cfg.size_max);
    a.rotation = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    a.hue = uniform01(rng);
    a.saturation = uniform01(rng);
    a.lightness = uniform(rng, cfg.lightness_min, 1.0);
    return a;
}

inline Attributes sample_attributes(std::uint64_t seed, const ShapeConfig& cfg) {
    Rng rng(seed);
    return sample_attributes(rng, cfg);
}

}  // namespace gw::shapes
