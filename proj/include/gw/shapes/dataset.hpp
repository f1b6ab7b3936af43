#pragma once

// On-disk Simple Shapes dataset. Every record is a pure function of
// (master seed, index), so a directory can be rebuilt or verified from its manifest.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gw/common/error.hpp"
#include "gw/common/hash.hpp"
#include "gw/common/io.hpp"
#include "gw/common/rng.hpp"
#include "gw/shapes/attributes.hpp"
#include "gw/shapes/colors.hpp"
#include "gw/shapes/grammar.hpp"
#include "gw/shapes/proto.hpp"
#include "gw/shapes/raster.hpp"

namespace gw::shapes {

inline constexpr const char* kDatasetFormat = "gw-shapes/1";

inline std::filesystem::path default_asset_dir() {
    if (const char* env = std::getenv("GW_ASSETS"); env && *env) return env;
#ifdef GW_ASSET_DIR
    return GW_ASSET_DIR;
#else
    return "assets";
#endif
}

struct Assets {
    ColorTable colors;
    Grammar grammar;
    std::string colors_hash;

    static Assets load(const std::filesystem::path& dir = default_asset_dir()) {
        Assets a{ColorTable::load(dir / "colors.tsv"), Grammar::load(dir / "grammar.json"), {}};
        a.colors_hash = hash_file(dir / "colors.tsv");
        return a;
    }
};

struct Record {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    Attributes attributes;
    ProtoVector proto{};
    Caption caption;
};

inline Record make_record(std::size_t index, std::uint64_t master_seed, const ShapeConfig& shape, const Assets& assets) {
    Record r;
    r.index = index;
    r.seed = derive_seed(master_seed, index);
    r.attributes = sample_attributes(derive_seed(r.seed, 0), shape);
    r.proto = ProtoCodec(shape).encode(r.attributes);
    r.caption = generate_caption(r.attributes, derive_seed(r.seed, 1), assets.grammar, assets.colors, shape);
    return r;
}

// Records [0, train_count) are the training pool; the next test_count are held out.
struct Dataset {
    ShapeConfig shape;
    std::uint64_t seed = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::vector<Record> records;

    std::span<const Record> train() const { return std::span(records).first(train_count); }
    std::span<const Record> test() const { return std::span(records).subspan(train_count, test_count); }
};

inline Dataset generate_dataset(std::size_t train_count, std::size_t test_count, std::uint64_t seed,
                                const Assets& assets, const ShapeConfig& shape = {}) {
    require(train_count >= 1, "dataset: need at least one training record");
    shape.validate();
    Dataset d{shape, seed, train_count, test_count, {}};
    d.records.reserve(train_count + test_count);
    for (std::size_t i = 0; i < train_count + test_count; ++i) d.records.push_back(make_record(i, seed, shape, assets));
    return d;
}

inline nlohmann::json shape_config_json(const ShapeConfig& s) {
    return {{"image_size", s.image_size},
            {"size_min", s.size_min},
            {"size_max", s.size_max},
            {"lightness_min", s.lightness_min}};
}

inline std::string config_hash(const ShapeConfig& s, const Assets& assets) {
    return hash_string(shape_config_json(s).dump() + assets.colors_hash + assets.grammar.source_hash);
}

namespace detail {

inline std::string attrs_row(const Record& r) {
    const Attributes& a = r.attributes;
    const Rgb c = a.color_bytes();
    std::string row = std::to_string(r.index) + "," + std::string(category_name(a.category));
    for (double v : {a.x, a.y, a.size, a.rotation, a.hue, a.saturation, a.lightness}) row += "," + fmt_double(v);
    row += "," + std::to_string(c.r) + "," + std::to_string(c.g) + "," + std::to_string(c.b);
    return row;
}

inline std::string image_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.ppm", index);
    return buf;
}

}  // namespace detail

inline nlohmann::json write_dataset(const Dataset& d, const std::filesystem::path& dir, const Assets& assets,
                                    bool images = false) {
    std::string attrs = "index,category,x,y,size,rotation,h,s,l,r,g,b\n";
    std::string proto, captions;
    std::vector<std::uint64_t> seeds;
    for (const Record& r : d.records) {
        attrs += detail::attrs_row(r) + "\n";
        append_f64(proto, r.proto);
        captions += r.caption.text + "\n";
        seeds.push_back(r.seed);
        if (images) write_file(dir / "img" / detail::image_name(r.index), render_image(r.attributes).to_ppm());
    }
    write_file(dir / "attrs.csv", attrs);
    write_file(dir / "proto.f64", proto);
    write_file(dir / "captions.txt", captions);

    nlohmann::json m = {{"format", kDatasetFormat},
                        {"seed", d.seed},
                        {"train_count", d.train_count},
                        {"test_count", d.test_count},
                        {"records", d.records.size()},
                        {"test_indices", {d.train_count, d.train_count + d.test_count}},
                        {"images", images},
                        {"shape", shape_config_json(d.shape)},
                        {"config_hash", config_hash(d.shape, assets)},
                        {"assets", {{"colors", assets.colors_hash}, {"grammar", assets.grammar.source_hash}}},
                        {"record_seeds", seeds},
                        {"files",
                         {{"attrs.csv", hash_string(attrs)},
                          {"proto.f64", hash_string(proto)},
                          {"captions.txt", hash_string(captions)}}}};
    write_file(dir / "manifest.json", m.dump(2) + "\n");
    return m;
}

inline nlohmann::json build_dataset(std::size_t train_count, std::uint64_t seed, const std::filesystem::path& dir,
                                    const Assets& assets, std::size_t test_count = 0, bool images = false,
                                    const ShapeConfig& shape = {}) {
    return write_dataset(generate_dataset(train_count, test_count, seed, assets, shape), dir, assets, images);
}

// Regenerates every record from the manifest seed and checks it against the files.
inline Dataset load_dataset(const std::filesystem::path& dir, const Assets& assets) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what(), (dir / "manifest.json").string());
    }
    auto fail = [&](const std::string& what, const char* file) { throw IoError(what, (dir / file).string()); };
    if (m.value("format", "") != kDatasetFormat) fail("unknown dataset format", "manifest.json");

    ShapeConfig shape;
    try {
        const auto& s = m.at("shape");
        shape = {s.at("image_size").get<double>(), s.at("size_min").get<double>(), s.at("size_max").get<double>(),
                 s.at("lightness_min").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("manifest: ") + e.what(), "manifest.json");
    }
    if (m.value("config_hash", "") != config_hash(shape, assets))
        fail("dataset was generated with different assets or shape config", "manifest.json");

    Dataset d = generate_dataset(m.at("train_count").get<std::size_t>(), m.at("test_count").get<std::size_t>(),
                                 m.at("seed").get<std::uint64_t>(), assets, shape);

    const std::vector<double> proto = parse_f64(read_file(dir / "proto.f64"));
    if (proto.size() != d.records.size() * kProtoDim) fail("wrong number of values", "proto.f64");
    const std::vector<std::string> captions = read_lines(dir / "captions.txt");
    if (captions.size() != d.records.size()) fail("wrong number of captions", "captions.txt");
    const std::vector<std::string> attrs = read_lines(dir / "attrs.csv");
    if (attrs.size() != d.records.size() + 1) fail("wrong number of rows", "attrs.csv");

    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const Record& r = d.records[i];
        for (std::size_t k = 0; k < kProtoDim; ++k)
            if (proto[i * kProtoDim + k] != r.proto[k])
                fail("record " + std::to_string(i) + " does not match its seed", "proto.f64");
        if (captions[i] != r.caption.text)
            fail("record " + std::to_string(i) + " does not match its seed", "captions.txt");
        if (attrs[i + 1] != detail::attrs_row(r))
            fail("record " + std::to_string(i) + " does not match its seed", "attrs.csv");
    }
    return d;
}

}  // namespace gw::shapes
