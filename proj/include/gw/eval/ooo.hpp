#pragma once

// Odd-one-out benchmark: triplet construction over proto attributes, a small
// probe trained on vision-encoded triplets, and its transfer to the language
// domain.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gw/core/model.hpp"
#include "gw/diffmath/adam.hpp"
#include "gw/shapes/proto.hpp"

namespace gw::eval {

using namespace gw::diff;
using shapes::ProtoVector;

enum class OooAttribute : std::uint8_t { shape, location, size, orientation, color };
inline constexpr std::size_t kOooAttributes = 5;

inline std::string_view ooo_attribute_name(OooAttribute a) {
    static constexpr std::array<std::string_view, kOooAttributes> names = {"shape", "location", "size", "orientation",
                                                                           "color"};
    return names[static_cast<std::size_t>(a)];
}

// Distance on one attribute in proto coordinates; shape is 0 or 2.
inline double attribute_distance(const ProtoVector& a, const ProtoVector& b, OooAttribute k) {
    namespace pi = shapes::proto_index;
    auto sq = [&](std::size_t i) { return (a[i] - b[i]) * (a[i] - b[i]); };
    switch (k) {
        case OooAttribute::shape:
            for (std::size_t c = 0; c < shapes::kCategoryCount; ++c)
                if (a[pi::category + c] != b[pi::category + c]) return 2.0;
            return 0.0;
        case OooAttribute::location: return std::sqrt(sq(pi::x) + sq(pi::y));
        case OooAttribute::size: return std::abs(a[pi::size] - b[pi::size]);
        case OooAttribute::orientation: return std::sqrt(sq(pi::cos) + sq(pi::sin));
        case OooAttribute::color: return std::sqrt(sq(pi::red) + sq(pi::red + 1) + sq(pi::red + 2));
    }
    return 0.0;
}

inline double item_distance(const ProtoVector& a, const ProtoVector& b) {
    double d = attribute_distance(a, b, OooAttribute::shape);
    for (std::size_t k = 1; k < kOooAttributes; ++k) d = std::min(d, attribute_distance(a, b, static_cast<OooAttribute>(k)));
    return d;
}

struct OooTriplet {
    std::size_t ref = 0, positive = 0, negative = 0;
    OooAttribute common = OooAttribute::shape;
    std::uint8_t odd_position = 0;

    // Item index shown at each of the three positions.
    std::array<std::size_t, 3> slots() const {
        std::array<std::size_t, 3> s{};
        std::size_t next = 0;
        const std::array<std::size_t, 2> pair{ref, positive};
        for (std::size_t p = 0; p < 3; ++p) s[p] = p == odd_position ? negative : pair[next++];
        return s;
    }
};

inline std::size_t default_far_pool(std::size_t items) { return std::max<std::size_t>(50, items / 1000); }

// The F items furthest from both ref and positive (score min(d(x, ref),
// d(x, positive)), descending; equal scores in index order).
inline std::vector<std::size_t> negative_pool(std::span<const ProtoVector> items, std::size_t ref, std::size_t positive,
                                              std::size_t F) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i == ref || i == positive) continue;
        scored.emplace_back(std::min(item_distance(items[i], items[ref]), item_distance(items[i], items[positive])), i);
    }
    require(F >= 1 && F <= scored.size(), "negative_pool: far pool larger than the candidate set");
    auto further = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(F), scored.end(), further);
    std::vector<std::size_t> out(F);
    for (std::size_t i = 0; i < F; ++i) out[i] = scored[i].second;
    return out;
}

// Triplet i depends only on (seed, i).
inline OooTriplet make_triplet(std::span<const ProtoVector> items, std::size_t F, std::uint64_t seed, std::size_t i) {
    Rng rng(derive_seed(seed, i));
    OooTriplet t;
    t.ref = uniform_index(rng, items.size());
    t.common = static_cast<OooAttribute>(uniform_index(rng, kOooAttributes));
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> ties;
    for (std::size_t j = 0; j < items.size(); ++j) {
        if (j == t.ref) continue;
        const double d = attribute_distance(items[t.ref], items[j], t.common);
        if (d < best) {
            best = d;
            ties.assign(1, j);
        } else if (d == best) {
            ties.push_back(j);
        }
    }
    t.positive = ties[uniform_index(rng, ties.size())];
    const auto pool = negative_pool(items, t.ref, t.positive, F);
    t.negative = pool[uniform_index(rng, pool.size())];
    t.odd_position = static_cast<std::uint8_t>(uniform_index(rng, 3));
    return t;
}

inline std::vector<OooTriplet> build_ooo_triplets(std::span<const ProtoVector> items, std::size_t count, std::size_t F,
                                                  std::uint64_t seed) {
    require_config(items.size() > F + 2, "odd-one-out: dataset must be larger than the far pool plus two");
    std::vector<OooTriplet> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make_triplet(items, F, seed, i));
    return out;
}

struct OooDataset {
    std::vector<OooTriplet> train, test;
};

// Training triplets over the training items, test triplets over the test items.
inline OooDataset build_ooo_dataset(std::span<const ProtoVector> train_items, std::span<const ProtoVector> test_items,
                                    std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                                    std::optional<std::size_t> F = std::nullopt) {
    return {build_ooo_triplets(train_items, n_train, F.value_or(default_far_pool(train_items.size())), derive_seed(seed, 1)),
            build_ooo_triplets(test_items, n_test, F.value_or(default_far_pool(test_items.size())), derive_seed(seed, 2))};
}

inline std::string ooo_csv(const std::vector<OooTriplet>& ts, std::string_view split) {
    std::string out;
    for (const auto& t : ts)
        out += std::string(split) + "," + std::to_string(t.ref) + "," + std::to_string(t.positive) + "," +
               std::to_string(t.negative) + "," + std::string(ooo_attribute_name(t.common)) + "," +
               std::to_string(t.odd_position) + "\n";
    return out;
}

inline std::string ooo_csv(const OooDataset& d) {
    return "split,ref,pos,neg,common_attribute,odd_position\n" + ooo_csv(d.train, "train") + ooo_csv(d.test, "test");
}

enum class OooMode : std::uint8_t { vvv, ttt, ttv };

inline std::string_view ooo_mode_name(OooMode m) {
    return m == OooMode::vvv ? "vvv" : m == OooMode::ttt ? "ttt" : "ttv";
}

// Position encoded through vision in ttv mode, one per triplet.
inline std::vector<std::uint8_t> ttv_vision_slots(std::size_t count, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x77f));
    std::vector<std::uint8_t> out(count);
    for (auto& s : out) s = static_cast<std::uint8_t>(uniform_index(rng, 3));
    return out;
}

// Workspace (or raw) latents of the items, row-aligned with the triplet indices.
struct EncodedItems {
    Matrix vision, language;
};

// One row per triplet: the three position latents side by side.
inline Matrix triplet_inputs(const std::vector<OooTriplet>& ts, const EncodedItems& e, OooMode mode,
                             std::uint64_t seed = 0) {
    const Matrix& first = mode == OooMode::ttt ? e.language : e.vision;
    const std::size_t w = first.cols();
    require(mode == OooMode::vvv || e.language.cols() == w, "triplet_inputs: language latents have another width");
    const auto vslots = mode == OooMode::ttv ? ttv_vision_slots(ts.size(), seed) : std::vector<std::uint8_t>{};
    Matrix x(ts.size(), 3 * w);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto s = ts[i].slots();
        for (std::size_t p = 0; p < 3; ++p) {
            const bool vision = mode == OooMode::vvv || (mode == OooMode::ttv && vslots[i] == p);
            const Matrix& src = vision ? e.vision : e.language;
            for (std::size_t c = 0; c < w; ++c) x(i, p * w + c) = src(s[p], c);
        }
    }
    return x;
}

inline std::vector<std::size_t> odd_labels(const std::vector<OooTriplet>& ts) {
    std::vector<std::size_t> y;
    y.reserve(ts.size());
    for (const auto& t : ts) y.push_back(t.odd_position);
    return y;
}

struct ProbeConfig {
    std::size_t hidden = 16;
    std::size_t steps = 5000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m.cols(); ++c)
        if (m(r, c) > m(r, best)) best = c;
    return best;
}

inline double accuracy(const Matrix& logits, std::span<const std::size_t> labels) {
    require(logits.rows() == labels.size() && !labels.empty(), "accuracy: one label per row required");
    std::size_t hit = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) hit += argmax_row(logits, r) == labels[r];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline Mlp make_probe(std::size_t input, const ProbeConfig& c) {
    Mlp net("probe", {input, c.hidden, 3}, Activation::relu);
    Rng rng(derive_seed(c.seed, 0x9b0e));
    net.init_uniform(rng);
    return net;
}

// Cross-entropy on the odd position over minibatches drawn with replacement.
inline Mlp train_probe(const Matrix& x, std::span<const std::size_t> labels, const ProbeConfig& c) {
    require(x.rows() == labels.size() && x.rows() > 0, "train_probe: one label per input row required");
    Mlp net = make_probe(x.cols(), c);
    Adam adam(AdamConfig{c.learning_rate});
    Rng rng(derive_seed(c.seed, 0xba7d));
    auto params = net.parameters();
    const std::vector<const Parameter*> cparams(params.begin(), params.end());
    std::vector<std::size_t> idx(c.batch_size), y(c.batch_size);
    for (std::size_t step = 0; step < c.steps; ++step) {
        for (std::size_t i = 0; i < c.batch_size; ++i) {
            idx[i] = uniform_index(rng, x.rows());
            y[i] = labels[idx[i]];
        }
        Graph g;
        g.backward(g.softmax_cross_entropy(net.forward(g, g.constant(x.gather_rows(idx))), y));
        adam.step(params, g.gradients(cparams));
    }
    return net;
}

// Probe over an encoder trained jointly from the raw latents (vvv only). The
// encoder has the workspace encoder's shape and is shared by the three positions.
struct EndToEndProbe {
    Mlp encoder, probe;

    Matrix logits(const Matrix& raw_inputs) const {
        Graph g(false);
        return g.value(forward(g, g.constant(raw_inputs)));
    }

    Var forward(Graph& g, Var x) const {
        const std::size_t w = g.value(x).cols() / 3;
        std::array<Var, 3> parts;
        for (std::size_t p = 0; p < 3; ++p) parts[p] = g.slice_cols(x, p * w, w);
        const std::size_t n = g.value(x).rows();
        const Var h = encoder.forward(g, g.concat_rows(parts));
        std::array<Var, 3> enc;
        for (std::size_t p = 0; p < 3; ++p) enc[p] = g.slice_rows(h, p * n, n);
        return probe.forward(g, g.concat_cols(enc));
    }

    std::size_t trainable_parameters() const { return encoder.parameter_count() + probe.parameter_count(); }
};

inline EndToEndProbe train_end_to_end(const Matrix& raw_x, std::span<const std::size_t> labels, const ProbeConfig& c,
                                      std::size_t gw_dim = 12, std::size_t hidden = 256, std::size_t hidden_layers = 3) {
    require(raw_x.rows() == labels.size() && raw_x.rows() > 0 && raw_x.cols() % 3 == 0,
            "train_end_to_end: one label per input row required");
    std::vector<std::size_t> widths{raw_x.cols() / 3};
    for (std::size_t l = 0; l < hidden_layers; ++l) widths.push_back(hidden);
    widths.push_back(gw_dim);
    EndToEndProbe m{Mlp("e2e_enc", widths, Activation::relu), make_probe(3 * gw_dim, c)};
    Rng init(derive_seed(c.seed, 0xe2e));
    m.encoder.init_uniform(init);
    Adam adam(AdamConfig{c.learning_rate});
    Rng rng(derive_seed(c.seed, 0xba7d));
    std::vector<Parameter*> params = m.encoder.parameters();
    for (Parameter* p : m.probe.parameters()) params.push_back(p);
    const std::vector<const Parameter*> cparams(params.begin(), params.end());
    std::vector<std::size_t> idx(c.batch_size), y(c.batch_size);
    for (std::size_t step = 0; step < c.steps; ++step) {
        for (std::size_t i = 0; i < c.batch_size; ++i) {
            idx[i] = uniform_index(rng, raw_x.rows());
            y[i] = labels[idx[i]];
        }
        Graph g;
        g.backward(g.softmax_cross_entropy(m.forward(g, g.constant(raw_x.gather_rows(idx))), y));
        adam.step(params, g.gradients(cparams));
    }
    return m;
}

struct OooAccuracy {
    double vvv = 0, ttt = 0, ttv = 0, vvv_train = 0;
};

// Trains the probe on vision-encoded training triplets and scores it on the
// test triplets in all three modes.
inline OooAccuracy eval_ooo(const OooDataset& d, const EncodedItems& train_items, const EncodedItems& test_items,
                            const ProbeConfig& c) {
    const Matrix xtr = triplet_inputs(d.train, train_items, OooMode::vvv);
    const auto ytr = odd_labels(d.train), yte = odd_labels(d.test);
    const Mlp probe = train_probe(xtr, ytr, c);
    OooAccuracy a;
    a.vvv_train = accuracy(probe.apply(xtr), ytr);
    a.vvv = accuracy(probe.apply(triplet_inputs(d.test, test_items, OooMode::vvv)), yte);
    a.ttt = accuracy(probe.apply(triplet_inputs(d.test, test_items, OooMode::ttt)), yte);
    a.ttv = accuracy(probe.apply(triplet_inputs(d.test, test_items, OooMode::ttv, c.seed)), yte);
    return a;
}

inline EncodedItems encode_items(const core::GwModel& m, const Matrix& vision_latents, const Matrix& language_latents) {
    return {m.encode(m.domains()[0], vision_latents), m.encode(m.domains()[1], language_latents)};
}

// The three reference points: an encoder trained for the task, no encoder,
// and a frozen random workspace.
struct OooBaselines {
    double end_to_end = 0, no_encoder = 0;
    OooAccuracy random_encoder;
    std::size_t end_to_end_parameters = 0, probe_parameters = 0;
};

inline OooBaselines run_ooo_baselines(const OooDataset& d, const Matrix& train_vision, const Matrix& test_vision,
                                      const Matrix& train_language, const Matrix& test_language,
                                      const core::ModelConfig& random_model, const ProbeConfig& c) {
    const auto ytr = odd_labels(d.train), yte = odd_labels(d.test);
    OooBaselines b;
    const EncodedItems raw_tr{train_vision, {}}, raw_te{test_vision, {}};
    const Matrix xtr = triplet_inputs(d.train, raw_tr, OooMode::vvv);
    const EndToEndProbe e2e = train_end_to_end(xtr, ytr, c, random_model.gw_dim, random_model.hidden,
                                               random_model.hidden_layers);
    b.end_to_end = accuracy(e2e.logits(triplet_inputs(d.test, raw_te, OooMode::vvv)), yte);
    b.end_to_end_parameters = e2e.trainable_parameters();

    const Mlp direct = train_probe(xtr, ytr, c);
    b.no_encoder = accuracy(direct.apply(triplet_inputs(d.test, raw_te, OooMode::vvv)), yte);
    b.probe_parameters = direct.parameter_count();

    const core::GwModel frozen(random_model);
    b.random_encoder = eval_ooo(d, encode_items(frozen, train_vision, train_language),
                                encode_items(frozen, test_vision, test_language), c);
    return b;
}

// Chi-square statistic of counts against a uniform distribution, and its
// upper-tail probability for two degrees of freedom.
inline double chi_square_uniform(std::span<const std::size_t> counts) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const double e = total / static_cast<double>(counts.size());
    double chi = 0.0;
    for (std::size_t c : counts) chi += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
    return chi;
}

inline double chi_square_p_2dof(double chi) { return std::exp(-chi / 2.0); }

}  // namespace gw::eval
