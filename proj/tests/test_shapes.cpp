#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "gw/shapes/dataset.hpp"

using namespace gw;
using namespace gw::shapes;

namespace {

const Assets& assets() {
    static const Assets a = Assets::load();
    return a;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("gw_test_shapes_" + name);
    std::filesystem::remove_all(p);
    return p;
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

TEST_CASE("sampled attributes stay in range and look uniform") {
    const ShapeConfig cfg;
    Rng rng(123);
    double rot_sum = 0.0, min_x = 1e9, max_x = -1e9;
    std::array<int, 3> cats{};
    for (int i = 0; i < 10000; ++i) {
        const Attributes a = sample_attributes(rng, cfg);
        min_x = std::min({min_x, a.x, a.y});
        max_x = std::max({max_x, a.x, a.y});
        REQUIRE(a.size >= cfg.size_min);
        REQUIRE(a.size <= cfg.size_max);
        REQUIRE(a.rotation >= 0.0);
        REQUIRE(a.rotation < 2.0 * std::numbers::pi);
        REQUIRE(a.lightness >= cfg.lightness_min);
        REQUIRE(a.lightness <= 1.0);
        REQUIRE(a.hue >= 0.0);
        REQUIRE(a.hue <= 1.0);
        rot_sum += a.rotation;
        ++cats[static_cast<std::size_t>(a.category)];
    }
    CHECK(min_x >= 7.0);
    CHECK(max_x < 25.0);
    CHECK(std::abs(rot_sum / 10000 - std::numbers::pi) < 0.1);
    for (int c : cats) CHECK(std::abs(c - 10000.0 / 3) < 200);
}

TEST_CASE("attribute streams are deterministic") {
    Rng a(0), b(0);
    for (int i = 0; i < 100; ++i) {
        const Attributes x = sample_attributes(a, {}), y = sample_attributes(b, {});
        REQUIRE(x.x == y.x);
        REQUIRE(x.rotation == y.rotation);
        REQUIRE(x.hue == y.hue);
    }
}

TEST_CASE("invalid shape config is rejected") {
    ShapeConfig cfg;
    cfg.size_min = 15.0;
    CHECK_THROWS_AS(sample_attributes(1, cfg), ConfigError);
    cfg = {};
    cfg.lightness_min = 1.0;
    CHECK_THROWS_AS(sample_attributes(1, cfg), ConfigError);
    cfg = {};
    cfg.size_max = 40.0;
    CHECK_THROWS_AS(sample_attributes(1, cfg), ConfigError);
}

TEST_CASE("proto encoding examples") {
    const ProtoCodec codec{ShapeConfig{}};
    Attributes a;
    a.category = Category::diamond;
    a.x = 16.0;
    a.y = 7.0;
    a.size = 14.0;
    a.rotation = 0.0;
    a.hue = 0.3;
    a.saturation = 0.5;
    a.lightness = 0.6;
    const ProtoVector p = codec.encode(a);
    CHECK(p[0] == -1.0);
    CHECK(p[1] == -1.0);
    CHECK(p[2] == 1.0);
    CHECK(p[proto_index::x] == Catch::Approx(0.0).margin(1e-12));
    CHECK(p[proto_index::y] == Catch::Approx(-1.0).margin(1e-12));
    CHECK(p[proto_index::size] == Catch::Approx(1.0).margin(1e-12));
    CHECK(p[proto_index::cos] == Catch::Approx(1.0).margin(1e-12));
    CHECK(p[proto_index::sin] == Catch::Approx(0.0).margin(1e-12));
    for (double v : p) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("proto decoding inverts encoding") {
    const ProtoCodec codec{ShapeConfig{}};
    Rng rng(5);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Attributes a = sample_attributes(rng, {});
        const ProtoVector p = codec.encode(a);
        const double c = p[proto_index::cos], s = p[proto_index::sin];
        REQUIRE(std::abs(c * c + s * s - 1.0) < 1e-9);
        const Attributes b = codec.decode(p);
        REQUIRE(b.category == a.category);
        const auto ra = a.rgb(), rb = b.rgb();
        for (double e : {b.x - a.x, b.y - a.y, b.size - a.size, ra[0] - rb[0], ra[1] - rb[1], ra[2] - rb[2],
                         std::remainder(b.rotation - a.rotation, 2.0 * std::numbers::pi)})
            worst = std::max(worst, std::abs(e));
        if (a.saturation > 1e-3 && a.lightness < 0.999) {
            REQUIRE(std::abs(std::remainder(b.hue - a.hue, 1.0)) < 1e-6);
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("proto decoding details") {
    const ProtoCodec codec{ShapeConfig{}};
    Attributes a = sample_attributes(9, {});
    ProtoVector p = codec.encode(a);
    p[0] = -1.0;
    p[1] = 1.0;
    p[2] = -1.0;
    CHECK(codec.decode(p).category == Category::triangle);

    a.rotation = 1.0;
    const ProtoVector p1 = codec.encode(a);
    a.rotation = 1.0 + 2.0 * std::numbers::pi;
    const ProtoVector p2 = codec.encode(a);
    CHECK(codec.decode(p1).rotation == Catch::Approx(codec.decode(p2).rotation).margin(1e-12));

    ProtoVector q = p1;
    q[proto_index::x] = 1.0 + 5e-7;
    CHECK_NOTHROW(codec.decode(q));
    q[proto_index::x] = 1.01;
    CHECK_THROWS_AS(codec.decode(q), ContractViolation);

    // Argmax stable under small perturbations away from ties.
    ProtoVector r = p1;
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        for (std::size_t k = 0; k < 3; ++k) r[k] = std::clamp(p1[k] + uniform(rng, -1e-6, 1e-6), -1.0, 1.0);
        REQUIRE(codec.decode(r).category == codec.decode(p1).category);
    }
}

TEST_CASE("rendered images") {
    Rng rng(11);
    const ShapeConfig cfg;
    for (int i = 0; i < 100; ++i) {
        Attributes a = sample_attributes(rng, cfg);
        a.size = cfg.size_max;
        const Image img = render_image(a);
        const double bg = static_cast<double>(img.count_background()) / (32.0 * 32.0);
        CHECK(bg < 1.0);
        CHECK(bg > 0.5);
        const Rgb color = a.color_bytes();
        for (const Rgb& px : img.pixels) REQUIRE((px == Rgb{} || px == color));

        a.size = cfg.size_min;
        CHECK(render_image(a).count_background() < 32u * 32u);

        Attributes turned = a;
        turned.rotation = a.rotation + 2.0 * std::numbers::pi;
        CHECK(render_image(turned) == render_image(a));
    }
}

TEST_CASE("rendering respects rotation direction") {
    Attributes a;
    a.category = Category::triangle;
    a.x = a.y = 16.0;
    a.size = 14.0;
    a.hue = 0.0;
    a.saturation = 1.0;
    a.lightness = 0.5;
    auto centroid = [](const Image& img) {
        double sx = 0, sy = 0, n = 0;
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x)
                if (!(img.at(x, y) == Rgb{})) {
                    sx += static_cast<double>(x) + 0.5;
                    sy += static_cast<double>(y) + 0.5;
                    n += 1;
                }
        return std::pair{sx / n, sy / n};
    };
    // The triangle's centroid sits behind its apex, so it lies opposite the heading.
    a.rotation = 0.0;
    auto [x0, y0] = centroid(render_image(a));
    CHECK(y0 > 16.0);
    a.rotation = deg(90);
    auto [x1, y1] = centroid(render_image(a));
    CHECK(x1 < 16.0);
}

TEST_CASE("nearest color") {
    const ColorTable& t = assets().colors;
    REQUIRE(t.size() == 141);
    CHECK(t[t.nearest({255, 255, 255})].name == "white");
    CHECK(t[t.nearest({0, 0, 0})].name == "black");
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const Rgb c{static_cast<std::uint8_t>(uniform_index(rng, 256)), static_cast<std::uint8_t>(uniform_index(rng, 256)),
                    static_cast<std::uint8_t>(uniform_index(rng, 256))};
        std::size_t best = 0;
        double best_d = 1e18;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double dr = double(c.r) - t[k].rgb.r, dg = double(c.g) - t[k].rgb.g, db = double(c.b) - t[k].rgb.b;
            const double d = std::sqrt(dr * dr + dg * dg + db * db);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        REQUIRE(t.nearest(c) == best);
    }
    CHECK_THROWS_AS(ColorTable(std::vector<NamedColor>{}).nearest({1, 2, 3}), ConfigError);
}

TEST_CASE("grammar has 39 slots within arity") {
    const Grammar& g = assets().grammar;
    const auto arity = g.arities();
    CHECK(arity.size() == 39);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Caption c = generate_caption(sample_attributes(rng, {}), derive_seed(1, i), g, assets().colors, {});
        for (std::size_t k = 0; k < 39; ++k) REQUIRE(c.trace.choices[k] < arity[k]);
    }
}

TEST_CASE("degrees are rounded to a multiple of five") {
    CHECK(Binning::degrees(deg(17)) == 15);
    CHECK(Binning::degrees(deg(358)) == 0);
    CHECK(Binning::degrees(deg(3)) == 5);
    CHECK(Binning::direction_sector(deg(11)) == 0);
    CHECK(Binning::direction_sector(deg(12)) == 1);
    CHECK(Binning::direction_sector(deg(350)) == 0);
    CHECK(Binning::direction_sector(deg(90)) == 4);

    Attributes a = sample_attributes(4, {});
    a.rotation = deg(17);
    const Grammar& g = assets().grammar;
    int found = 0;
    for (std::uint64_t seed = 0; found < 20 && seed < 2000; ++seed) {
        const Caption c = generate_caption(a, seed, g, assets().colors, {});
        if (c.bins.rotation_kind != RotationKind::degrees) continue;
        ++found;
        CHECK(c.bins.rotation_value == 15);
        const bool ccw = c.trace[Slot::degree_direction] == 1;
        CHECK(c.text.find(ccw ? " 345 " : " 15 ") != std::string::npos);
    }
    CHECK(found == 20);
}

TEST_CASE("center position is verbalized as the center") {
    Attributes a = sample_attributes(8, {});
    a.x = a.y = 16.0;
    const Binning b{ShapeConfig{}};
    CHECK(b.row(a) == 3);
    CHECK(b.col(a) == 3);
    const Caption c = generate_caption(a, 42, assets().grammar, assets().colors, {});
    CHECK(c.text.find("in the center") != std::string::npos);
    CHECK(c.bins.row == 3);
    CHECK(c.bins.col == 3);
}

TEST_CASE("captions are deterministic and regenerable from bins and trace") {
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const Attributes a = sample_attributes(rng, {});
        const Caption c1 = generate_caption(a, 1000 + i, assets().grammar, assets().colors, {});
        const Caption c2 = generate_caption(a, 1000 + i, assets().grammar, assets().colors, {});
        REQUIRE(c1.text == c2.text);
        REQUIRE(render_caption(c1.bins, c1.trace, assets().grammar, assets().colors) == c1.text);
    }
}

TEST_CASE("parser recovers the verbalized bins") {
    const ShapeConfig cfg;
    const ColorTable& colors = assets().colors;
    Rng rng(77);
    for (int i = 0; i < 10000; ++i) {
        const Attributes a = sample_attributes(rng, cfg);
        const Caption c = generate_caption(a, derive_seed(77, i), assets().grammar, colors, cfg);
        AttributeBins parsed;
        REQUIRE_NOTHROW(parsed = parse_caption(c.text, assets().grammar, colors));
        INFO(c.text);
        REQUIRE(parsed == c.bins);

        // Independent binning oracle.
        REQUIRE(parsed.category == a.category);
        REQUIRE(parsed.row == static_cast<std::size_t>(std::floor(a.y * 7.0 / 32.0)));
        REQUIRE(parsed.col == static_cast<std::size_t>(std::floor(a.x * 7.0 / 32.0)));
        REQUIRE(parsed.size_class == std::min<std::size_t>(3, static_cast<std::size_t>((a.size - 7.0) / 7.0 * 4.0)));
        const double d = a.rotation * 180.0 / std::numbers::pi;
        if (parsed.rotation_kind == RotationKind::degrees) {
            REQUIRE(parsed.rotation_value % 5 == 0);
            REQUIRE(std::abs(std::remainder(static_cast<double>(parsed.rotation_value) - d, 360.0)) <= 2.5 + 1e-9);
        } else {
            REQUIRE(std::abs(std::remainder(static_cast<double>(parsed.rotation_value) * 22.5 - d, 360.0)) <=
                    11.25 + 1e-9);
        }
        const Rgb rgb = a.color_bytes();
        const Rgb named = colors[parsed.color].rgb;
        auto dist2 = [&](const Rgb& q) {
            const int dr = rgb.r - q.r, dg = rgb.g - q.g, db = rgb.b - q.b;
            return dr * dr + dg * dg + db * db;
        };
        for (const auto& e : colors.entries()) REQUIRE(dist2(named) <= dist2(e.rgb));
    }
}

TEST_CASE("parser fixed phrases") {
    const Grammar& g = assets().grammar;
    const ColorTable& colors = assets().colors;
    const std::string s =
        "There is a triangle, it's in the center, it is small, it's navy, and it's facing the north.";
    const AttributeBins b = parse_caption(s, g, colors);
    CHECK(b.row == 3);
    CHECK(b.col == 3);
    CHECK(b.category == Category::triangle);
    CHECK(b.size_class == 1);
    CHECK(b.color == colors.index_of("navy"));
    CHECK(b.rotation_kind == RotationKind::cardinal);
    CHECK(b.rotation_value == 0);

    const std::string upper = "The picture shows one kite. It's at the top, slightly right. It is big. "
                              "It seems to be rotated about 15 deg counterclockwise, it looks mostly in dark red colour.";
    const AttributeBins u = parse_caption(upper, g, colors);
    CHECK(u.category == Category::diamond);
    CHECK(u.row == 1);
    CHECK(u.col == 4);
    CHECK(u.size_class == 3);
    CHECK(u.rotation_kind == RotationKind::degrees);
    CHECK(u.rotation_value == 345);
    CHECK(u.color == colors.index_of("dark red"));
}

TEST_CASE("parser reports the offset of the bad phrase") {
    const Grammar& g = assets().grammar;
    const std::string bad = "There is a triangle, it's in the middle, it is small, it's navy, and it's facing north.";
    try {
        parse_caption(bad, g, assets().colors);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == bad.find("middle"));
    }
    CHECK_THROWS_AS(parse_caption("", g, assets().colors), ParseError);
    CHECK_THROWS_AS(parse_caption("There is a triangle.", g, assets().colors), ParseError);
}

TEST_CASE("caption length stays below 300 bytes on every grammar path") {
    // Caption length is a sum of per-block contributions, so the longest sentence
    // combines the longest variant of each block. Each block is enumerated fully.
    const Grammar& g = assets().grammar;
    const ColorTable& colors = assets().colors;
    const auto arity = g.arities();

    AttributeBins bins;
    bins.category = Category::diamond;
    bins.row = 0;
    bins.col = 6;
    bins.size_class = 2;
    bins.color = 0;
    for (std::size_t k = 0; k < colors.size(); ++k)
        if (colors[k].name.size() > colors[bins.color].name.size()) bins.color = k;

    auto render = [&](AttributeBins b, const GrammarTrace& t) {
        b.shape_word = t[Slot::shape_word];
        b.rotation_kind = static_cast<RotationKind>(t[Slot::rotation_variant]);
        b.rotation_value = b.rotation_kind == RotationKind::degrees ? 300 : 1;
        return render_caption(b, t, g, colors);
    };

    using S = Slot;
    const std::vector<std::vector<S>> blocks = {
        {S::opening, S::determiner, S::shape_adjective, S::shape_word},
        {S::order0, S::order1, S::order2, S::order3},
        {S::separator0, S::separator1, S::separator2, S::separator3, S::conjunction},
        {S::location_link, S::location_hedge, S::location_order, S::row_synonym, S::col_synonym, S::location_joiner},
        {S::size_link, S::size_hedge, S::size_word, S::size_frame},
        {S::color_link, S::color_hedge, S::color_frame, S::color_spelling},
        {S::rotation_link, S::rotation_variant, S::cardinal_frame, S::cardinal_article, S::cardinal_style,
         S::corner_frame, S::corner_style, S::degree_frame, S::degree_hedge, S::degree_unit, S::degree_direction},
        {S::ending},
    };

    const GrammarTrace base{};
    const std::size_t base_len = render(bins, base).size();
    std::size_t worst = base_len;
    std::size_t paths = 0;
    for (const auto& block : blocks) {
        std::size_t block_max = 0;
        GrammarTrace t{};
        // Odometer over the block's slots.
        while (true) {
            ++paths;
            // All 16 direction names are tried for the rotation block.
            for (std::size_t sector = 0; sector < (block.back() == S::degree_direction ? 16u : 1u); ++sector) {
                AttributeBins b = bins;
                std::string text;
                if (block.back() == S::degree_direction) {
                    b.shape_word = t[S::shape_word];
                    b.rotation_kind = static_cast<RotationKind>(t[S::rotation_variant]);
                    b.rotation_value = b.rotation_kind == RotationKind::degrees ? (sector * 5 + 275) % 360 : sector;
                    text = render_caption(b, t, g, colors);
                } else {
                    text = render(bins, t);
                }
                block_max = std::max(block_max, text.size() - std::min(text.size(), base_len));
            }
            std::size_t i = 0;
            for (; i < block.size(); ++i) {
                auto& c = t.choices[static_cast<std::size_t>(block[i])];
                if (++c < arity[static_cast<std::size_t>(block[i])]) break;
                c = 0;
            }
            if (i == block.size()) break;
        }
        worst += block_max;
    }
    INFO("longest caption bound: " << worst << " bytes over " << paths << " block paths");
    CHECK(paths > 1000);
    CHECK(worst < 300);

    // Additivity holds on random full traces, which is what makes the block sum a bound.
    Rng rng(8);
    for (int i = 0; i < 20000; ++i) {
        const Caption c = generate_caption(sample_attributes(rng, {}), derive_seed(8, i), g, colors, {});
        REQUIRE(c.text.size() < 300);
        REQUIRE(c.text.size() <= worst);
    }
}

TEST_CASE("dataset build, reload and determinism") {
    const auto dir = scratch_dir("a");
    const auto m = build_dataset(100, 5, dir, assets(), 10, true);
    CHECK(m.at("records").get<std::size_t>() == 110);
    CHECK(m.at("train_count").get<std::size_t>() == 100);
    const auto seeds = m.at("record_seeds").get<std::vector<std::uint64_t>>();
    CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 110);
    CHECK(read_lines(dir / "captions.txt").size() == 110);
    CHECK(std::filesystem::exists(dir / "img" / "000099.ppm"));

    const Dataset d = load_dataset(dir, assets());
    CHECK(d.train().size() == 100);
    CHECK(d.test().size() == 10);
    std::set<std::size_t> train_idx, test_idx;
    for (const auto& r : d.train()) train_idx.insert(r.index);
    for (const auto& r : d.test()) test_idx.insert(r.index);
    CHECK(train_idx.size() == 100);
    for (auto i : test_idx) CHECK(!train_idx.contains(i));

    const auto dir2 = scratch_dir("b");
    build_dataset(100, 5, dir2, assets(), 10, true);
    for (const char* f : {"manifest.json", "attrs.csv", "proto.f64", "captions.txt", "img/000042.ppm"})
        CHECK(read_file(dir / f) == read_file(dir2 / f));

    // Tampering is detected.
    std::string caps = read_file(dir2 / "captions.txt");
    caps[3] = caps[3] == 'x' ? 'y' : 'x';
    write_file(dir2 / "captions.txt", caps);
    CHECK_THROWS_AS(load_dataset(dir2, assets()), IoError);
    CHECK_THROWS_AS(load_dataset(scratch_dir("missing"), assets()), IoError);

    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("held-out test set of 1000 records is disjoint") {
    const Dataset d = generate_dataset(500, 1000, 3, assets());
    CHECK(d.test().size() == 1000);
    std::set<std::size_t> seen;
    for (const auto& r : d.records) seen.insert(r.index);
    CHECK(seen.size() == 1500);
    CHECK(d.test().front().index == 500);
}
