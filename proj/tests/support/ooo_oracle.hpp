#pragma once

// Exhaustive odd-one-out reference computed from raw attributes, without the
// proto codec or the triplet builder.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gw/shapes/attributes.hpp"

namespace gw::testing {

struct OracleItem {
    int category;
    double x, y, size, c, s, r, g, b;
};

inline OracleItem oracle_item(const shapes::Attributes& a, const shapes::ShapeConfig& cfg) {
    auto unit = [](double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; };
    const double lo = cfg.size_max / 2.0, hi = cfg.image_size - cfg.size_max / 2.0;
    const auto rgb = a.rgb();
    return {static_cast<int>(a.category), unit(a.x, lo, hi), unit(a.y, lo, hi), unit(a.size, cfg.size_min, cfg.size_max),
            std::cos(a.rotation), std::sin(a.rotation), 2 * rgb[0] - 1, 2 * rgb[1] - 1, 2 * rgb[2] - 1};
}

// 0 shape, 1 location, 2 size, 3 orientation, 4 color.
inline double oracle_attribute(const OracleItem& p, const OracleItem& q, int k) {
    switch (k) {
        case 0: return p.category == q.category ? 0.0 : 2.0;
        case 1: return std::hypot(p.x - q.x, p.y - q.y);
        case 2: return std::fabs(p.size - q.size);
        case 3: return std::hypot(p.c - q.c, p.s - q.s);
        default: return std::sqrt((p.r - q.r) * (p.r - q.r) + (p.g - q.g) * (p.g - q.g) + (p.b - q.b) * (p.b - q.b));
    }
}

inline double oracle_distance(const OracleItem& p, const OracleItem& q) {
    double d = 1e300;
    for (int k = 0; k < 5; ++k) d = std::min(d, oracle_attribute(p, q, k));
    return d;
}

// Every item at the minimal attribute distance from ref.
inline std::vector<std::size_t> oracle_positives(const std::vector<OracleItem>& items, std::size_t ref, int k) {
    double best = 1e300;
    for (std::size_t j = 0; j < items.size(); ++j)
        if (j != ref) best = std::min(best, oracle_attribute(items[ref], items[j], k));
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < items.size(); ++j)
        if (j != ref && oracle_attribute(items[ref], items[j], k) == best) out.push_back(j);
    return out;
}

// Full descending sort of min(d(x, ref), d(x, pos)); equal scores by index.
inline std::vector<std::size_t> oracle_far_pool(const std::vector<OracleItem>& items, std::size_t ref, std::size_t pos,
                                                std::size_t F) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < items.size(); ++j)
        if (j != ref && j != pos)
            all.emplace_back(std::min(oracle_distance(items[j], items[ref]), oracle_distance(items[j], items[pos])), j);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < F && i < all.size(); ++i) out.push_back(all[i].second);
    return out;
}

}  // namespace gw::testing
