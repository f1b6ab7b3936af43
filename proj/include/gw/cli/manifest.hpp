#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gw/common/error.hpp"
#include "gw/common/hash.hpp"
#include "gw/common/io.hpp"

namespace gw::cli {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kManifestFormat = "gw-run/1";

#ifdef GW_VERSION
inline constexpr const char* kToolVersion = GW_VERSION;
#else
inline constexpr const char* kToolVersion = "dev";
#endif

// What produced an output directory, and a hash of every file in it.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json assets = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    std::string tool_version = kToolVersion;
    std::vector<std::pair<std::string, std::string>> outputs;  // relative path, hash

    static RunManifest of(std::string command, nlohmann::json config, nlohmann::json assets, nlohmann::json seeds) {
        RunManifest m;
        m.command = std::move(command);
        m.config = std::move(config);
        m.assets = std::move(assets);
        m.seeds = std::move(seeds);
        return m;
    }

    std::string config_hash() const { return hash_string(config.dump()); }

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [p, h] : outputs) out.push_back({{"path", p}, {"hash", h}});
        return {{"format", kManifestFormat}, {"command", command},          {"config", config},
                {"config_hash", config_hash()}, {"assets", assets},        {"seeds", seeds},
                {"tool_version", tool_version}, {"outputs", out}};
    }

    // Every regular file under `dir` except the manifest, in path order.
    void collect_outputs(const fs::path& dir) {
        outputs.clear();
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            const std::string rel = fs::relative(e.path(), dir).generic_string();
            if (rel == kManifestName) continue;
            outputs.emplace_back(rel, hash_file(e.path()));
        }
        std::sort(outputs.begin(), outputs.end());
    }

    void write(const fs::path& dir) {
        collect_outputs(dir);
        write_file(dir / kManifestName, to_json().dump(2) + "\n");
    }

    bool lists(const std::string& rel) const {
        return std::any_of(outputs.begin(), outputs.end(), [&](const auto& o) { return o.first == rel; });
    }

    // Reads the manifest and checks every listed output against its hash.
    static RunManifest open(const fs::path& dir) {
        const fs::path path = dir / kManifestName;
        RunManifest m;
        try {
            const auto j = nlohmann::json::parse(read_file(path));
            if (j.value("format", "") != kManifestFormat) throw IoError("not a run manifest", path.string());
            m.command = j.at("command").get<std::string>();
            m.config = j.at("config");
            m.assets = j.at("assets");
            m.seeds = j.at("seeds");
            m.tool_version = j.at("tool_version").get<std::string>();
            for (const auto& o : j.at("outputs")) m.outputs.emplace_back(o.at("path").get<std::string>(), o.at("hash").get<std::string>());
            if (j.at("config_hash").get<std::string>() != m.config_hash())
                throw IoError("config hash does not match the recorded config", path.string());
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("malformed manifest: ") + e.what(), path.string());
        }
        for (const auto& [rel, h] : m.outputs) {
            const fs::path f = dir / rel;
            if (!fs::exists(f)) throw IoError("listed output is missing", f.string());
            if (hash_file(f) != h) throw IoError("output does not match its recorded hash (stale or edited)", f.string());
        }
        return m;
    }
};

}  // namespace gw::cli
