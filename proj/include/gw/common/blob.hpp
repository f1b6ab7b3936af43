#pragma once

// Binary container: magic line, one-line JSON header, raw little-endian f64 block.
// Used for frozen specialist snapshots and model checkpoints.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gw/common/error.hpp"
#include "gw/common/hash.hpp"
#include "gw/common/io.hpp"

namespace gw {

struct Blob {
    nlohmann::json header;
    std::vector<double> values;
};

inline void write_blob(const std::filesystem::path& path, std::string_view magic, nlohmann::json header,
                       std::span<const double> values) {
    header["value_count"] = values.size();
    header["value_hash"] = [&] {
        Fnv1a h;
        h.update(values);
        return h.hex();
    }();
    std::string out = std::string(magic) + "\n" + header.dump() + "\n";
    append_f64(out, values);
    write_file(path, out);
}

inline Blob read_blob(const std::filesystem::path& path, std::string_view magic) {
    const std::string bytes = read_file(path);
    const auto nl1 = bytes.find('\n');
    if (nl1 == std::string::npos || std::string_view(bytes).substr(0, nl1) != magic)
        throw IoError("not a " + std::string(magic) + " file", path.string());
    const auto nl2 = bytes.find('\n', nl1 + 1);
    if (nl2 == std::string::npos) throw IoError("truncated header", path.string());
    Blob b;
    try {
        b.header = nlohmann::json::parse(bytes.substr(nl1 + 1, nl2 - nl1 - 1));
        const std::string_view body = std::string_view(bytes).substr(nl2 + 1);
        if (body.size() % sizeof(double) != 0 || body.size() / sizeof(double) != b.header.at("value_count").get<std::size_t>())
            throw IoError("value block size does not match header", path.string());
        b.values = parse_f64(body);
        Fnv1a h;
        h.update(std::span<const double>(b.values));
        if (h.hex() != b.header.at("value_hash").get<std::string>()) throw IoError("value block hash mismatch", path.string());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed header: ") + e.what(), path.string());
    }
    return b;
}

}  // namespace gw
