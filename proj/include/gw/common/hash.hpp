#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>

#include "gw/common/error.hpp"

namespace gw {

// FNV-1a, 64 bit. Used for config/asset fingerprints, not for security.
class Fnv1a {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            h_ ^= c;
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::span<const double> values) {
        update(std::string_view(reinterpret_cast<const char*>(values.data()),
                                values.size() * sizeof(double)));
    }
    std::uint64_t digest() const { return h_; }
    std::string hex() const { return to_hex(h_); }

    static std::string to_hex(std::uint64_t v) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_string(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading", path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string hash_file(const std::filesystem::path& path) { return hash_string(read_file(path)); }

}  // namespace gw
