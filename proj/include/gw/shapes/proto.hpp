#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "gw/common/error.hpp"
#include "gw/shapes/attributes.hpp"

namespace gw::shapes {

// Layout: one-hot(3) category, x, y, size, r, g, b, cos(rotation), sin(rotation);
// every component affinely scaled to [-1, 1].
inline constexpr std::size_t kProtoDim = 11;
using ProtoVector = std::array<double, kProtoDim>;

namespace proto_index {
inline constexpr std::size_t category = 0;
inline constexpr std::size_t x = 3;
inline constexpr std::size_t y = 4;
inline constexpr std::size_t size = 5;
inline constexpr std::size_t red = 6;
inline constexpr std::size_t cos = 9;
inline constexpr std::size_t sin = 10;
}  // namespace proto_index

// value in [lo, hi] -> [-1, 1]
struct AffineRange {
    double lo, hi;
    double to_unit(double v) const { return 2.0 * (v - lo) / (hi - lo) - 1.0; }
    double from_unit(double u) const { return lo + (u + 1.0) * (hi - lo) / 2.0; }
};

struct ProtoCodec {
    AffineRange position;
    AffineRange size;
    AffineRange unit{0.0, 1.0};

    explicit ProtoCodec(const ShapeConfig& cfg)
        : position{cfg.position_min(), cfg.position_max()}, size{cfg.size_min, cfg.size_max} {}

    ProtoVector encode(const Attributes& a) const {
        ProtoVector p{};
        for (std::size_t c = 0; c < kCategoryCount; ++c)
            p[proto_index::category + c] = static_cast<std::size_t>(a.category) == c ? 1.0 : -1.0;
        p[proto_index::x] = position.to_unit(a.x);
        p[proto_index::y] = position.to_unit(a.y);
        p[proto_index::size] = size.to_unit(a.size);
        const auto rgb = a.rgb();
        for (std::size_t c = 0; c < 3; ++c) p[proto_index::red + c] = unit.to_unit(rgb[c]);
        p[proto_index::cos] = std::cos(a.rotation);
        p[proto_index::sin] = std::sin(a.rotation);
        return p;
    }

    // Category by argmax, rotation by atan2, HSL recovered from RGB.
    // Components may exceed [-1, 1] by at most 1e-6 and are clamped.
    Attributes decode(ProtoVector p) const {
        for (double& v : p) {
            require(std::isfinite(v) && std::abs(v) <= 1.0 + 1e-6, "decode_proto: component outside [-1, 1]");
            v = std::clamp(v, -1.0, 1.0);
        }
        Attributes a;
        const auto* first = p.data() + proto_index::category;
        a.category = static_cast<Category>(std::max_element(first, first + kCategoryCount) - first);
        a.x = position.from_unit(p[proto_index::x]);
        a.y = position.from_unit(p[proto_index::y]);
        a.size = size.from_unit(p[proto_index::size]);
        a.rotation = wrap_angle(std::atan2(p[proto_index::sin], p[proto_index::cos]));
        const auto hsl = rgb_to_hsl(unit.from_unit(p[proto_index::red]), unit.from_unit(p[proto_index::red + 1]),
                                    unit.from_unit(p[proto_index::red + 2]));
        a.hue = hsl[0];
        a.saturation = hsl[1];
        a.lightness = hsl[2];
        return a;
    }
};

}  // namespace gw::shapes
