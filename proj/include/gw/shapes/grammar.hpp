#pragma once

// Caption generation for shape attributes. The sentence is fully determined by
// the quantized attribute bins plus a trace of 39 discrete choices (frame,
// attribute order, linking words, synonyms); phrase tables come from a data file.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gw/common/error.hpp"
#include "gw/common/hash.hpp"
#include "gw/common/rng.hpp"
#include "gw/shapes/attributes.hpp"
#include "gw/shapes/colors.hpp"

namespace gw::shapes {

enum class RotationKind : std::uint8_t { cardinal = 0, corner = 1, degrees = 2 };
enum class AttributeKind : std::uint8_t { location = 0, size = 1, color = 2, rotation = 3 };
inline constexpr std::size_t kAttributeKinds = 4;
inline constexpr std::size_t kGridCells = 7;
inline constexpr std::size_t kSizeClasses = 4;
inline constexpr std::size_t kDirections = 16;

// Quantized descriptors actually verbalized in a caption.
struct AttributeBins {
    Category category = Category::egg;
    std::size_t shape_word = 0;
    std::size_t row = 0, col = 0;  // 7x7 grid cell
    std::size_t size_class = 0;    // tiny, small, medium, large
    RotationKind rotation_kind = RotationKind::cardinal;
    std::size_t rotation_value = 0;  // sector in [0,16) or clockwise degrees, multiple of 5
    std::size_t color = 0;           // index into the color table
    friend bool operator==(const AttributeBins&, const AttributeBins&) = default;
};

// Trace slots in draw order.
enum class Slot : std::uint8_t {
    opening, determiner, shape_adjective, shape_word,
    order0, order1, order2, order3,
    separator0, separator1, separator2, separator3, conjunction,
    location_link, location_hedge, location_order, row_synonym, col_synonym, location_joiner,
    size_link, size_hedge, size_word, size_frame,
    color_link, color_hedge, color_frame, color_spelling,
    rotation_link, rotation_variant,
    cardinal_frame, cardinal_article, cardinal_style,
    corner_frame, corner_style,
    degree_frame, degree_hedge, degree_unit, degree_direction,
    ending,
    count
};
inline constexpr std::size_t kTraceLength = static_cast<std::size_t>(Slot::count);
static_assert(kTraceLength == 39);

struct GrammarTrace {
    std::array<std::uint8_t, kTraceLength> choices{};

    std::size_t operator[](Slot s) const { return choices[static_cast<std::size_t>(s)]; }
    std::uint8_t& operator[](Slot s) { return choices[static_cast<std::size_t>(s)]; }
    friend bool operator==(const GrammarTrace&, const GrammarTrace&) = default;
};

struct Caption {
    std::string text;
    GrammarTrace trace;
    AttributeBins bins;
};

using Synonyms = std::vector<std::string>;

struct Grammar {
    Synonyms openings, determiners, shape_adjectives, separators, conjunctions, endings;
    std::array<Synonyms, kCategoryCount> shape_words;

    Synonyms location_links, location_hedges, location_joiners;
    std::string center;
    std::array<Synonyms, kGridCells> rows, cols;

    Synonyms size_links, size_hedges, size_frames;
    std::array<Synonyms, kSizeClasses> size_classes;

    Synonyms color_links, color_hedges, color_frames;
    std::vector<std::array<std::string, 2>> color_spellings;  // {color, colored}

    Synonyms rotation_links;
    Synonyms cardinal_frames, cardinal_articles;
    std::array<Synonyms, kDirections> cardinal_names;
    Synonyms corner_frames;
    std::array<Synonyms, kDirections> corner_names;
    Synonyms degree_frames, degree_hedges, degree_units, degree_directions;

    std::string source_hash;

    static Grammar from_json(const nlohmann::json& j) {
        Grammar g;
        auto list = [](const nlohmann::json& node, const char* what) {
            Synonyms s = node.get<Synonyms>();
            require_config(!s.empty(), std::string("grammar: empty list '") + what + "'");
            return s;
        };
        auto fixed = [&]<std::size_t N>(const nlohmann::json& node, std::array<Synonyms, N>& out, const char* what) {
            require_config(node.size() == N, std::string("grammar: '") + what + "' needs " + std::to_string(N) + " rows");
            for (std::size_t i = 0; i < N; ++i) out[i] = list(node[i], what);
        };
        try {
            g.openings = list(j.at("openings"), "openings");
            g.determiners = list(j.at("determiners"), "determiners");
            g.shape_adjectives = list(j.at("shape_adjectives"), "shape_adjectives");
            g.separators = list(j.at("separators"), "separators");
            g.conjunctions = list(j.at("conjunctions"), "conjunctions");
            g.endings = list(j.at("endings"), "endings");
            for (std::size_t c = 0; c < kCategoryCount; ++c)
                g.shape_words[c] = list(j.at("shape_words").at(std::string(category_name(Category(c)))), "shape_words");
            const auto& loc = j.at("location");
            g.location_links = list(loc.at("links"), "location.links");
            g.location_hedges = list(loc.at("hedges"), "location.hedges");
            g.location_joiners = list(loc.at("joiners"), "location.joiners");
            g.center = loc.at("center").get<std::string>();
            fixed(loc.at("rows"), g.rows, "location.rows");
            fixed(loc.at("cols"), g.cols, "location.cols");
            const auto& sz = j.at("size");
            g.size_links = list(sz.at("links"), "size.links");
            g.size_hedges = list(sz.at("hedges"), "size.hedges");
            g.size_frames = list(sz.at("frames"), "size.frames");
            fixed(sz.at("classes"), g.size_classes, "size.classes");
            const auto& co = j.at("color");
            g.color_links = list(co.at("links"), "color.links");
            g.color_hedges = list(co.at("hedges"), "color.hedges");
            g.color_frames = list(co.at("frames"), "color.frames");
            for (const auto& sp : co.at("spellings")) {
                require_config(sp.size() == 2, "grammar: color.spellings entries are [color, colored]");
                g.color_spellings.push_back({sp[0].get<std::string>(), sp[1].get<std::string>()});
            }
            require_config(!g.color_spellings.empty(), "grammar: empty color.spellings");
            const auto& ro = j.at("rotation");
            g.rotation_links = list(ro.at("links"), "rotation.links");
            g.cardinal_frames = list(ro.at("cardinal_frames"), "rotation.cardinal_frames");
            g.cardinal_articles = list(ro.at("cardinal_articles"), "rotation.cardinal_articles");
            fixed(ro.at("cardinal_names"), g.cardinal_names, "rotation.cardinal_names");
            g.corner_frames = list(ro.at("corner_frames"), "rotation.corner_frames");
            fixed(ro.at("corner_names"), g.corner_names, "rotation.corner_names");
            g.degree_frames = list(ro.at("degree_frames"), "rotation.degree_frames");
            g.degree_hedges = list(ro.at("degree_hedges"), "rotation.degree_hedges");
            g.degree_units = list(ro.at("degree_units"), "rotation.degree_units");
            g.degree_directions = list(ro.at("degree_directions"), "rotation.degree_directions");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("grammar: ") + e.what());
        }
        require_config(g.degree_directions.size() == 2, "grammar: degree_directions must be [clockwise, counterclockwise]");
        g.check_uniform_arity();
        return g;
    }

    static Grammar load(const std::filesystem::path& path) {
        const std::string text = read_file(path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
        Grammar g = from_json(j);
        g.source_hash = hash_string(text);
        return g;
    }

    // Declared arity of each trace slot.
    std::array<std::size_t, kTraceLength> arities() const {
        std::array<std::size_t, kTraceLength> a{};
        auto set = [&](Slot s, std::size_t n) { a[static_cast<std::size_t>(s)] = n; };
        set(Slot::opening, openings.size());
        set(Slot::determiner, determiners.size());
        set(Slot::shape_adjective, shape_adjectives.size());
        set(Slot::shape_word, shape_words[0].size());
        set(Slot::order0, 4);
        set(Slot::order1, 3);
        set(Slot::order2, 2);
        set(Slot::order3, 1);
        for (Slot s : {Slot::separator0, Slot::separator1, Slot::separator2, Slot::separator3})
            set(s, separators.size());
        set(Slot::conjunction, conjunctions.size());
        set(Slot::location_link, location_links.size());
        set(Slot::location_hedge, location_hedges.size());
        set(Slot::location_order, 2);
        set(Slot::row_synonym, rows[0].size());
        set(Slot::col_synonym, cols[0].size());
        set(Slot::location_joiner, location_joiners.size());
        set(Slot::size_link, size_links.size());
        set(Slot::size_hedge, size_hedges.size());
        set(Slot::size_word, size_classes[0].size());
        set(Slot::size_frame, size_frames.size());
        set(Slot::color_link, color_links.size());
        set(Slot::color_hedge, color_hedges.size());
        set(Slot::color_frame, color_frames.size());
        set(Slot::color_spelling, color_spellings.size());
        set(Slot::rotation_link, rotation_links.size());
        set(Slot::rotation_variant, 3);
        set(Slot::cardinal_frame, cardinal_frames.size());
        set(Slot::cardinal_article, cardinal_articles.size());
        set(Slot::cardinal_style, cardinal_names[0].size());
        set(Slot::corner_frame, corner_frames.size());
        set(Slot::corner_style, corner_names[0].size());
        set(Slot::degree_frame, degree_frames.size());
        set(Slot::degree_hedge, degree_hedges.size());
        set(Slot::degree_unit, degree_units.size());
        set(Slot::degree_direction, degree_directions.size());
        set(Slot::ending, endings.size());
        return a;
    }

private:
    // Synonym tables indexed by a bin must offer the same number of variants for
    // every bin, so a trace entry means the same thing whatever the attributes.
    void check_uniform_arity() const {
        auto same = [](const auto& rows_, const char* what) {
            for (const auto& r : rows_)
                require_config(r.size() == rows_[0].size(), std::string("grammar: ragged synonym table ") + what);
        };
        same(shape_words, "shape_words");
        same(rows, "location.rows");
        same(cols, "location.cols");
        same(size_classes, "size.classes");
        same(cardinal_names, "rotation.cardinal_names");
        same(corner_names, "rotation.corner_names");
        for (const auto& a : arities()) require_config(a >= 1 && a <= 255, "grammar: slot arity out of range");
    }
};

// Maps continuous attributes to the bins used by captions.
struct Binning {
    ShapeConfig shape;

    std::size_t grid_index(double v) const {
        const auto i = static_cast<long>(std::floor(v * static_cast<double>(kGridCells) / shape.image_size));
        return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(kGridCells) - 1));
    }
    std::size_t row(const Attributes& a) const { return grid_index(a.y); }
    std::size_t col(const Attributes& a) const { return grid_index(a.x); }

    // Four equal-width classes over [size_min, size_max].
    std::size_t size_class(double s) const {
        const double t = (s - shape.size_min) / (shape.size_max - shape.size_min);
        const auto i = static_cast<long>(std::floor(t * static_cast<double>(kSizeClasses)));
        return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(kSizeClasses) - 1));
    }

    // 16 sectors of 22.5 degrees centered on north, north-northeast, ... (clockwise).
    static std::size_t direction_sector(double rotation) {
        const double sector = wrap_angle(rotation) / (2.0 * std::numbers::pi / kDirections);
        return static_cast<std::size_t>(std::lround(sector)) % kDirections;
    }

    // Clockwise degrees rounded to the closest multiple of 5, in [0, 360).
    static std::size_t degrees(double rotation) {
        const double deg = wrap_angle(rotation) * 180.0 / std::numbers::pi;
        return static_cast<std::size_t>(std::lround(deg / 5.0) * 5) % 360;
    }
};

inline AttributeBins bin_attributes(const Attributes& a, const GrammarTrace& trace, const ShapeConfig& shape,
                                    const ColorTable& colors) {
    const Binning b{shape};
    AttributeBins bins;
    bins.category = a.category;
    bins.shape_word = trace[Slot::shape_word];
    bins.row = b.row(a);
    bins.col = b.col(a);
    bins.size_class = b.size_class(a.size);
    bins.rotation_kind = static_cast<RotationKind>(trace[Slot::rotation_variant]);
    bins.rotation_value = bins.rotation_kind == RotationKind::degrees ? Binning::degrees(a.rotation)
                                                                      : Binning::direction_sector(a.rotation);
    bins.color = colors.nearest(a.color_bytes());
    return bins;
}

// Attribute order encoded by the four order slots (pick from the remaining list).
inline std::array<AttributeKind, kAttributeKinds> attribute_order(const GrammarTrace& t) {
    std::vector<AttributeKind> remaining{AttributeKind::location, AttributeKind::size, AttributeKind::color,
                                         AttributeKind::rotation};
    std::array<AttributeKind, kAttributeKinds> order{};
    const Slot slots[] = {Slot::order0, Slot::order1, Slot::order2, Slot::order3};
    for (std::size_t k = 0; k < kAttributeKinds; ++k) {
        const std::size_t pick = t[slots[k]];
        require(pick < remaining.size(), "grammar trace: order choice out of range");
        order[k] = remaining[pick];
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return order;
}

namespace detail {

inline std::string replace_all(std::string s, std::string_view key, std::string_view value) {
    for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
    return s;
}

inline bool starts_with_vowel(std::string_view s) {
    return !s.empty() && std::string_view("aeiouAEIOU").find(s[0]) != std::string_view::npos;
}

inline std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

inline std::string article(std::string_view det, std::string_view next) {
    if (det == "a" && starts_with_vowel(next)) return "an";
    return std::string(det);
}

}  // namespace detail

// Deterministic text from (bins, trace).
inline std::string render_caption(const AttributeBins& bins, const GrammarTrace& t, const Grammar& g,
                                  const ColorTable& colors) {
    const auto arity = g.arities();
    for (std::size_t i = 0; i < kTraceLength; ++i)
        require(t.choices[i] < arity[i], "grammar trace: choice exceeds declared arity");
    require(bins.row < kGridCells && bins.col < kGridCells, "bins: grid cell out of range");
    require(bins.size_class < kSizeClasses, "bins: size class out of range");
    require(bins.color < colors.size(), "bins: color index out of range");

    auto segment = [&](AttributeKind kind) -> std::string {
        switch (kind) {
            case AttributeKind::location: {
                std::string phrase;
                if (bins.row == 3 && bins.col == 3) {
                    phrase = g.center;
                } else {
                    const std::string& r = g.rows[bins.row][t[Slot::row_synonym]];
                    const std::string& c = g.cols[bins.col][t[Slot::col_synonym]];
                    const std::string& j = g.location_joiners[t[Slot::location_joiner]];
                    phrase = t[Slot::location_order] == 0 ? r + j + c : c + j + r;
                }
                return g.location_links[t[Slot::location_link]] + " " + g.location_hedges[t[Slot::location_hedge]] +
                       phrase;
            }
            case AttributeKind::size:
                return g.size_links[t[Slot::size_link]] + " " + g.size_hedges[t[Slot::size_hedge]] +
                       detail::replace_all(g.size_frames[t[Slot::size_frame]], "{w}",
                                           g.size_classes[bins.size_class][t[Slot::size_word]]);
            case AttributeKind::color: {
                const auto& sp = g.color_spellings[t[Slot::color_spelling]];
                std::string f = g.color_frames[t[Slot::color_frame]];
                f = detail::replace_all(f, "{c}", colors[bins.color].name);
                f = detail::replace_all(f, "{colored}", sp[1]);
                f = detail::replace_all(f, "{color}", sp[0]);
                return g.color_links[t[Slot::color_link]] + " " + g.color_hedges[t[Slot::color_hedge]] + f;
            }
            case AttributeKind::rotation: {
                std::string out = g.rotation_links[t[Slot::rotation_link]] + " ";
                switch (bins.rotation_kind) {
                    case RotationKind::cardinal:
                        require(bins.rotation_value < kDirections, "bins: direction sector out of range");
                        return out + g.cardinal_frames[t[Slot::cardinal_frame]] + " " +
                               g.cardinal_articles[t[Slot::cardinal_article]] +
                               g.cardinal_names[bins.rotation_value][t[Slot::cardinal_style]];
                    case RotationKind::corner:
                        require(bins.rotation_value < kDirections, "bins: direction sector out of range");
                        return out + g.corner_frames[t[Slot::corner_frame]] + " " +
                               g.corner_names[bins.rotation_value][t[Slot::corner_style]];
                    case RotationKind::degrees: {
                        require(bins.rotation_value < 360 && bins.rotation_value % 5 == 0,
                                "bins: degrees must be a multiple of 5 in [0, 360)");
                        const bool ccw = t[Slot::degree_direction] == 1;
                        const std::size_t shown = ccw ? (360 - bins.rotation_value) % 360 : bins.rotation_value;
                        return out + g.degree_frames[t[Slot::degree_frame]] + " " +
                               g.degree_hedges[t[Slot::degree_hedge]] + std::to_string(shown) + " " +
                               g.degree_units[t[Slot::degree_unit]] + " " + g.degree_directions[t[Slot::degree_direction]];
                    }
                }
            }
        }
        return {};
    };

    const std::string& word = g.shape_words[static_cast<std::size_t>(bins.category)][bins.shape_word];
    const std::string& adj = g.shape_adjectives[t[Slot::shape_adjective]];
    std::string text = g.openings[t[Slot::opening]] + " " +
                       detail::article(g.determiners[t[Slot::determiner]], adj.empty() ? word : adj) + " " + adj + word;
    const Slot seps[] = {Slot::separator0, Slot::separator1, Slot::separator2, Slot::separator3};
    const auto order = attribute_order(t);
    for (std::size_t k = 0; k < kAttributeKinds; ++k) {
        const std::string& sep = g.separators[t[seps[k]]];
        std::string part = (k + 1 == kAttributeKinds ? g.conjunctions[t[Slot::conjunction]] : std::string()) +
                           segment(order[k]);
        if (!sep.empty() && sep.find('.') != std::string::npos) part = detail::capitalize(std::move(part));
        text += sep + part;
    }
    text += g.endings[t[Slot::ending]];
    return text;
}

inline GrammarTrace sample_trace(Rng& rng, const Grammar& g) {
    GrammarTrace t;
    const auto arity = g.arities();
    for (std::size_t i = 0; i < kTraceLength; ++i) t.choices[i] = static_cast<std::uint8_t>(uniform_index(rng, arity[i]));
    return t;
}

inline Caption generate_caption(const Attributes& a, std::uint64_t seed, const Grammar& g, const ColorTable& colors,
                                const ShapeConfig& shape) {
    Rng rng(seed);
    Caption c;
    c.trace = sample_trace(rng, g);
    c.bins = bin_attributes(a, c.trace, shape, colors);
    c.text = render_caption(c.bins, c.trace, g, colors);
    return c;
}

// Recovers the verbalized bins from a caption produced with the same tables.
// Backtracking recursive descent; matching is case-insensitive.
class CaptionParser {
public:
    CaptionParser(const Grammar& g, const ColorTable& colors) : g_(g), colors_(colors) {}

    AttributeBins parse(std::string_view text) const {
        State st{text, 0};
        std::optional<AttributeBins> out;
        for (std::size_t end : matches(st, 0, g_.openings)) {
            if (out) break;
            auto p = lit(st, end, " ");
            if (!p) continue;
            for (std::string_view det : {"an", "a", "one"}) {
                if (out) break;
                auto q = lit(st, *p, det);
                if (!q) continue;
                auto r = lit(st, *q, " ");
                if (!r) continue;
                for (std::size_t a_end : matches(st, *r, g_.shape_adjectives)) {
                    if (out) break;
                    for (std::size_t c = 0; c < kCategoryCount && !out; ++c) {
                        for (std::size_t w = 0; w < g_.shape_words[c].size() && !out; ++w) {
                            auto s = lit(st, a_end, g_.shape_words[c][w]);
                            if (!s) continue;
                            AttributeBins bins;
                            bins.category = static_cast<Category>(c);
                            bins.shape_word = w;
                            out = segments(st, *s, 0, 0u, bins);
                        }
                    }
                }
            }
        }
        if (!out) throw ParseError("unrecognized phrase", st.furthest);
        return *out;
    }

private:
    struct State {
        std::string_view text;
        mutable std::size_t furthest;
    };

    static char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

    static std::optional<std::size_t> lit(const State& st, std::size_t pos, std::string_view s) {
        if (pos + s.size() > st.text.size()) {
            st.furthest = std::max(st.furthest, pos);
            return std::nullopt;
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (lower(st.text[pos + i]) != lower(s[i])) {
                st.furthest = std::max(st.furthest, pos + i);
                return std::nullopt;
            }
        }
        return pos + s.size();
    }

    static std::vector<std::size_t> matches(const State& st, std::size_t pos, const Synonyms& options) {
        std::vector<std::size_t> out;
        for (const auto& o : options)
            if (auto e = lit(st, pos, o)) out.push_back(*e);
        return out;
    }

    using Candidates = std::vector<std::pair<std::size_t, AttributeBins>>;

    std::optional<AttributeBins> segments(const State& st, std::size_t pos, std::size_t k, unsigned seen,
                                          const AttributeBins& bins) const {
        if (k == kAttributeKinds) {
            for (const auto& e : g_.endings)
                if (auto end = lit(st, pos, e); end && *end == st.text.size()) return bins;
            st.furthest = std::max(st.furthest, pos);
            return std::nullopt;
        }
        for (std::size_t sep_end : matches(st, pos, g_.separators)) {
            std::vector<std::size_t> starts{sep_end};
            if (k + 1 == kAttributeKinds) starts = matches(st, sep_end, g_.conjunctions);
            for (std::size_t start : starts) {
                for (std::size_t kind = 0; kind < kAttributeKinds; ++kind) {
                    if (seen & (1u << kind)) continue;
                    for (const auto& [end, b] : segment(st, start, static_cast<AttributeKind>(kind), bins))
                        if (auto r = segments(st, end, k + 1, seen | (1u << kind), b)) return r;
                }
            }
        }
        return std::nullopt;
    }

    Candidates segment(const State& st, std::size_t pos, AttributeKind kind, const AttributeBins& bins) const {
        Candidates out;
        switch (kind) {
            case AttributeKind::location:
                for (std::size_t l : linked(st, pos, g_.location_links))
                    for (std::size_t h : matches(st, l, g_.location_hedges)) location(st, h, bins, out);
                break;
            case AttributeKind::size:
                for (std::size_t l : linked(st, pos, g_.size_links))
                    for (std::size_t h : matches(st, l, g_.size_hedges)) size(st, h, bins, out);
                break;
            case AttributeKind::color:
                for (std::size_t l : linked(st, pos, g_.color_links))
                    for (std::size_t h : matches(st, l, g_.color_hedges)) color(st, h, bins, out);
                break;
            case AttributeKind::rotation:
                for (std::size_t l : linked(st, pos, g_.rotation_links)) rotation(st, l, bins, out);
                break;
        }
        return out;
    }

    // Link phrase followed by a space.
    static std::vector<std::size_t> linked(const State& st, std::size_t pos, const Synonyms& links) {
        std::vector<std::size_t> out;
        for (std::size_t e : matches(st, pos, links))
            if (auto s = lit(st, e, " ")) out.push_back(*s);
        return out;
    }

    void location(const State& st, std::size_t pos, const AttributeBins& bins, Candidates& out) const {
        if (auto e = lit(st, pos, g_.center)) {
            AttributeBins b = bins;
            b.row = b.col = 3;
            out.emplace_back(*e, b);
        }
        auto grid = [&](const auto& first, const auto& second, bool row_first) {
            for (std::size_t i = 0; i < kGridCells; ++i)
                for (std::size_t e1 : matches(st, pos, first[i]))
                    for (std::size_t j_end : matches(st, e1, g_.location_joiners))
                        for (std::size_t k = 0; k < kGridCells; ++k)
                            for (std::size_t e2 : matches(st, j_end, second[k])) {
                                AttributeBins b = bins;
                                b.row = row_first ? i : k;
                                b.col = row_first ? k : i;
                                out.emplace_back(e2, b);
                            }
        };
        grid(g_.rows, g_.cols, true);
        grid(g_.cols, g_.rows, false);
    }

    void size(const State& st, std::size_t pos, const AttributeBins& bins, Candidates& out) const {
        for (const auto& frame : g_.size_frames) {
            const auto at = frame.find("{w}");
            const std::string before = frame.substr(0, at), after = frame.substr(at + 3);
            auto p = lit(st, pos, before);
            if (!p) continue;
            for (std::size_t c = 0; c < kSizeClasses; ++c)
                for (std::size_t e : matches(st, *p, g_.size_classes[c]))
                    if (auto f = lit(st, e, after)) {
                        AttributeBins b = bins;
                        b.size_class = c;
                        out.emplace_back(*f, b);
                    }
        }
    }

    void color(const State& st, std::size_t pos, const AttributeBins& bins, Candidates& out) const {
        for (const auto& frame : g_.color_frames) {
            const auto at = frame.find("{c}");
            const std::string before = frame.substr(0, at), after = frame.substr(at + 3);
            auto p = lit(st, pos, before);
            if (!p) continue;
            for (std::size_t c = 0; c < colors_.size(); ++c) {
                auto e = lit(st, *p, colors_[c].name);
                if (!e) continue;
                for (const auto& sp : g_.color_spellings) {
                    std::string tail = detail::replace_all(after, "{colored}", sp[1]);
                    tail = detail::replace_all(tail, "{color}", sp[0]);
                    if (auto f = lit(st, *e, tail)) {
                        AttributeBins b = bins;
                        b.color = c;
                        out.emplace_back(*f, b);
                    }
                }
            }
        }
    }

    void rotation(const State& st, std::size_t pos, const AttributeBins& bins, Candidates& out) const {
        for (std::size_t fe : matches(st, pos, g_.cardinal_frames)) {
            auto sp = lit(st, fe, " ");
            if (!sp) continue;
            for (std::size_t ae : matches(st, *sp, g_.cardinal_articles))
                for (std::size_t d = 0; d < kDirections; ++d)
                    for (std::size_t e : matches(st, ae, g_.cardinal_names[d])) {
                        AttributeBins b = bins;
                        b.rotation_kind = RotationKind::cardinal;
                        b.rotation_value = d;
                        out.emplace_back(e, b);
                    }
        }
        for (std::size_t fe : matches(st, pos, g_.corner_frames)) {
            auto sp = lit(st, fe, " ");
            if (!sp) continue;
            for (std::size_t d = 0; d < kDirections; ++d)
                for (std::size_t e : matches(st, *sp, g_.corner_names[d])) {
                    AttributeBins b = bins;
                    b.rotation_kind = RotationKind::corner;
                    b.rotation_value = d;
                    out.emplace_back(e, b);
                }
        }
        for (std::size_t fe : matches(st, pos, g_.degree_frames)) {
            auto sp = lit(st, fe, " ");
            if (!sp) continue;
            for (std::size_t he : matches(st, *sp, g_.degree_hedges)) {
                std::size_t i = he;
                std::size_t value = 0;
                while (i < st.text.size() && i - he < 3 && std::isdigit(static_cast<unsigned char>(st.text[i])))
                    value = value * 10 + static_cast<std::size_t>(st.text[i++] - '0');
                if (i == he || value >= 360 || value % 5 != 0) {
                    st.furthest = std::max(st.furthest, i);
                    continue;
                }
                auto s1 = lit(st, i, " ");
                if (!s1) continue;
                for (std::size_t ue : matches(st, *s1, g_.degree_units)) {
                    auto s2 = lit(st, ue, " ");
                    if (!s2) continue;
                    for (std::size_t dir = 0; dir < g_.degree_directions.size(); ++dir) {
                        auto e = lit(st, *s2, g_.degree_directions[dir]);
                        if (!e) continue;
                        AttributeBins b = bins;
                        b.rotation_kind = RotationKind::degrees;
                        b.rotation_value = dir == 1 ? (360 - value) % 360 : value;
                        out.emplace_back(*e, b);
                    }
                }
            }
        }
    }

    const Grammar& g_;
    const ColorTable& colors_;
};

inline AttributeBins parse_caption(std::string_view text, const Grammar& g, const ColorTable& colors) {
    return CaptionParser(g, colors).parse(text);
}

}  // namespace gw::shapes
