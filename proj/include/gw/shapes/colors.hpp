#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gw/common/error.hpp"
#include "gw/common/io.hpp"
#include "gw/shapes/attributes.hpp"

namespace gw::shapes {

struct NamedColor {
    std::string name;
    Rgb rgb;
};

class ColorTable {
public:
    ColorTable() = default;
    explicit ColorTable(std::vector<NamedColor> entries) : entries_(std::move(entries)) {}

    // TSV with a header row: name, r, g, b.
    static ColorTable load(const std::filesystem::path& path) {
        const auto lines = read_lines(path);
        std::vector<NamedColor> entries;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto f = split(lines[i], '\t');
            if (f.size() != 4) throw ConfigError(path.string() + ":" + std::to_string(i + 1) + ": expected 4 fields");
            auto byte = [&](const std::string& s) {
                const int v = std::stoi(s);
                if (v < 0 || v > 255) throw ConfigError(path.string() + ": channel out of range");
                return static_cast<std::uint8_t>(v);
            };
            entries.push_back({f[0], {byte(f[1]), byte(f[2]), byte(f[3])}});
        }
        return ColorTable(std::move(entries));
    }

    std::size_t size() const noexcept { return entries_.size(); }
    const NamedColor& operator[](std::size_t i) const { return entries_.at(i); }
    const std::vector<NamedColor>& entries() const noexcept { return entries_; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name == name) return i;
        throw ConfigError("unknown color name '" + name + "'");
    }

    // Euclidean nearest neighbour in RGB; ties go to the lowest index.
    std::size_t nearest(Rgb c) const {
        require_config(!entries_.empty(), "color table is empty");
        std::size_t best = 0;
        long best_d = std::numeric_limits<long>::max();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const long dr = long(entries_[i].rgb.r) - c.r;
            const long dg = long(entries_[i].rgb.g) - c.g;
            const long db = long(entries_[i].rgb.b) - c.b;
            const long d = dr * dr + dg * dg + db * db;
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

private:
    std::vector<NamedColor> entries_;
};

}  // namespace gw::shapes
