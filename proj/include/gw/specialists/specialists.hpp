#pragma once

// Frozen unimodal modules. They turn a dataset record into one latent vector
// per domain: a vision latent from a fixed random network over the attributes,
// the proto-language vector itself, and a text latent from the caption's bins and
// grammar trace. None of them is ever trained.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gw/common/blob.hpp"
#include "gw/common/error.hpp"
#include "gw/common/hash.hpp"
#include "gw/common/rng.hpp"
#include "gw/diffmath/graph.hpp"
#include "gw/diffmath/mlp.hpp"
#include "gw/shapes/dataset.hpp"

namespace gw::specialists {

using namespace gw::diff;

enum class Domain : std::uint8_t { vision = 0, proto = 1, text = 2 };
inline constexpr std::size_t kDomainCount = 3;

inline std::string_view domain_name(Domain d) {
    switch (d) {
        case Domain::vision: return "vision";
        case Domain::proto: return "proto";
        case Domain::text: return "text";
    }
    return "?";
}

inline Domain domain_from_name(std::string_view s) {
    if (s == "vision" || s == "v") return Domain::vision;
    if (s == "proto" || s == "attr" || s == "p") return Domain::proto;
    if (s == "text" || s == "t") return Domain::text;
    throw ConfigError("unknown domain '" + std::string(s) + "'");
}

enum class LossKind : std::uint8_t { mse, mse_plus_category_ce };

struct DomainSpec {
    Domain domain = Domain::vision;
    std::size_t latent_dim = 0;
    LossKind loss_kind = LossKind::mse;
    std::uint64_t seed = 0;
    std::string params_hash;
};

inline constexpr std::size_t kVisionDim = 12;
inline constexpr std::size_t kTextDim = 12;
inline constexpr std::size_t kCalibrationProbe = 10000;
inline constexpr double kCalibratedStd = 0.5;
inline constexpr double kTraceWeight = 0.3;

inline std::size_t latent_dim(Domain d) {
    return d == Domain::proto ? shapes::kProtoDim : (d == Domain::vision ? kVisionDim : kTextDim);
}

// Per-coordinate centring and rescaling measured once on a probe set.
struct Calibration {
    std::vector<double> shift, scale;

    static Calibration fit(const Matrix& raw, double target_std) {
        require(raw.rows() > 1, "calibration needs at least two samples");
        Calibration c;
        const double n = static_cast<double>(raw.rows());
        for (std::size_t j = 0; j < raw.cols(); ++j) {
            double mean = 0.0, var = 0.0;
            for (std::size_t i = 0; i < raw.rows(); ++i) mean += raw(i, j);
            mean /= n;
            for (std::size_t i = 0; i < raw.rows(); ++i) var += (raw(i, j) - mean) * (raw(i, j) - mean);
            const double sd = std::sqrt(var / n);
            require(sd > 0.0, "calibration: constant latent coordinate");
            c.shift.push_back(mean);
            c.scale.push_back(target_std / sd);
        }
        return c;
    }

    void apply(Matrix& x) const {
        require(x.cols() == shift.size(), "calibration: width mismatch");
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = (x(i, j) - shift[j]) * scale[j];
    }
};

// Concatenated one-hot encoding of a caption's bins and grammar trace.
class TextFeaturizer {
public:
    TextFeaturizer(const shapes::Grammar& g, std::size_t color_count, double trace_weight = kTraceWeight)
        : arity_(g.arities()), colors_(color_count), words_(g.shape_words[0].size()), trace_weight_(trace_weight) {
        bins_width_ = shapes::kCategoryCount + words_ + 2 * shapes::kGridCells + shapes::kSizeClasses + 3 +
                      2 * shapes::kDirections + 72 + colors_;
        width_ = bins_width_;
        for (std::size_t a : arity_) width_ += a;
    }

    std::size_t width() const noexcept { return width_; }

    void write(const shapes::AttributeBins& b, const shapes::GrammarTrace& t, std::span<double> out) const {
        require(out.size() == width_, "text features: wrong output width");
        std::fill(out.begin(), out.end(), 0.0);
        std::size_t off = 0;
        auto hot = [&](std::size_t i, std::size_t n, double w = 1.0) {
            require(i < n, "text features: bin out of range");
            out[off + i] = w;
            off += n;
        };
        hot(static_cast<std::size_t>(b.category), shapes::kCategoryCount);
        hot(b.shape_word, words_);
        hot(b.row, shapes::kGridCells);
        hot(b.col, shapes::kGridCells);
        hot(b.size_class, shapes::kSizeClasses);
        hot(static_cast<std::size_t>(b.rotation_kind), 3);
        const bool sector = b.rotation_kind != shapes::RotationKind::degrees;
        const bool corner = b.rotation_kind == shapes::RotationKind::corner;
        // Cardinal and corner names use separate blocks; degrees use 72 five-degree bins.
        if (sector && !corner) out[off + b.rotation_value] = 1.0;
        off += shapes::kDirections;
        if (corner) out[off + b.rotation_value] = 1.0;
        off += shapes::kDirections;
        if (!sector) out[off + b.rotation_value / 5] = 1.0;
        off += 72;
        hot(b.color, colors_);
        for (std::size_t k = 0; k < shapes::kTraceLength; ++k) hot(t.choices[k], arity_[k], trace_weight_);
    }

private:
    std::array<std::size_t, shapes::kTraceLength> arity_;
    std::size_t colors_, words_;
    double trace_weight_;
    std::size_t bins_width_ = 0, width_ = 0;
};

class Specialists {
public:
    static constexpr const char* kMagic = "GWSPEC1";

    Specialists(std::uint64_t seed, const shapes::Assets& assets, const shapes::ShapeConfig& shape = {})
        : seed_(seed),
          assets_(&assets),
          shape_(shape),
          featurizer_(assets.grammar, assets.colors.size()),
          vision_("vision_embed", {shapes::kProtoDim, 32, 32, kVisionDim}, Activation::tanh),
          text_{"text_embed", Matrix(featurizer_.width(), kTextDim), true} {
        Rng rng(derive_seed(seed, 0x5eed01));
        vision_.init_normal(rng);
        vision_.set_frozen(true);
        const double sd = 1.0 / std::sqrt(static_cast<double>(featurizer_.width()));
        for (double& w : text_.value.values()) w = normal(rng, 0.0, sd);

        // Calibration probe: a dedicated stream of attributes and captions.
        std::vector<shapes::Attributes> attrs;
        std::vector<shapes::Caption> caps;
        for (std::size_t i = 0; i < kCalibrationProbe; ++i) {
            const std::uint64_t s = derive_seed(derive_seed(seed, 0xca1b), i);
            attrs.push_back(shapes::sample_attributes(derive_seed(s, 0), shape_));
            caps.push_back(shapes::generate_caption(attrs.back(), derive_seed(s, 1), assets.grammar, assets.colors, shape_));
        }
        vision_cal_ = Calibration::fit(vision_raw(attrs), kCalibratedStd);
        std::vector<const shapes::AttributeBins*> bins;
        std::vector<const shapes::GrammarTrace*> traces;
        for (const auto& c : caps) {
            bins.push_back(&c.bins);
            traces.push_back(&c.trace);
        }
        text_cal_ = Calibration::fit(text_raw(bins, traces), kCalibratedStd);
        hash_ = compute_hash();
    }

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& hash() const noexcept { return hash_; }
    const shapes::ShapeConfig& shape() const noexcept { return shape_; }
    const shapes::Assets& assets() const noexcept { return *assets_; }
    const TextFeaturizer& featurizer() const noexcept { return featurizer_; }

    DomainSpec spec(Domain d) const {
        return {d, latent_dim(d), d == Domain::proto ? LossKind::mse_plus_category_ce : LossKind::mse, seed_, hash_};
    }

    std::vector<const Parameter*> parameters() const {
        auto p = vision_.parameters();
        p.push_back(&text_);
        return p;
    }

    Matrix vision_embed(std::span<const shapes::Attributes> attrs) const {
        Matrix z = vision_raw(attrs);
        vision_cal_.apply(z);
        return z;
    }

    std::vector<double> vision_embed(const shapes::Attributes& a) const {
        const Matrix z = vision_embed(std::span(&a, 1));
        return {z.values().begin(), z.values().end()};
    }

    static Matrix proto_embed(std::span<const shapes::ProtoVector> protos) {
        Matrix out(protos.size(), shapes::kProtoDim);
        for (std::size_t i = 0; i < protos.size(); ++i)
            std::copy(protos[i].begin(), protos[i].end(), out.row_span(i).begin());
        return out;
    }

    // Parses each caption and embeds the recovered bins with the caption's trace.
    Matrix text_embed(std::span<const shapes::Caption> captions) const {
        const shapes::CaptionParser parser(assets_->grammar, assets_->colors);
        std::vector<shapes::AttributeBins> parsed;
        parsed.reserve(captions.size());
        for (const auto& c : captions) parsed.push_back(parser.parse(c.text));
        std::vector<const shapes::AttributeBins*> bins;
        std::vector<const shapes::GrammarTrace*> traces;
        for (std::size_t i = 0; i < captions.size(); ++i) {
            bins.push_back(&parsed[i]);
            traces.push_back(&captions[i].trace);
        }
        Matrix z = text_raw(bins, traces);
        text_cal_.apply(z);
        return z;
    }

    std::vector<double> text_embed(const shapes::Caption& c) const {
        const Matrix z = text_embed(std::span(&c, 1));
        return {z.values().begin(), z.values().end()};
    }

    Matrix embed(Domain d, std::span<const shapes::Record> records) const {
        switch (d) {
            case Domain::vision: {
                std::vector<shapes::Attributes> a;
                for (const auto& r : records) a.push_back(r.attributes);
                return vision_embed(a);
            }
            case Domain::proto: {
                std::vector<shapes::ProtoVector> p;
                for (const auto& r : records) p.push_back(r.proto);
                return proto_embed(p);
            }
            case Domain::text: {
                std::vector<shapes::Caption> c;
                for (const auto& r : records) c.push_back(r.caption);
                return text_embed(c);
            }
        }
        return {};
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json h = {{"format", kMagic},
                            {"seed", seed_},
                            {"hash", hash_},
                            {"vision_widths", {shapes::kProtoDim, 32, 32, kVisionDim}},
                            {"text_features", featurizer_.width()},
                            {"latent_dims", {kVisionDim, shapes::kProtoDim, kTextDim}}};
        write_blob(path, kMagic, h, flat());
    }

    // Loads weights from a snapshot; rejects it if it does not match the
    // specialist that `seed` regenerates with the current assets.
    static Specialists load(const std::filesystem::path& path, const shapes::Assets& assets,
                            const shapes::ShapeConfig& shape = {}) {
        const Blob b = read_blob(path, kMagic);
        Specialists s(b.header.at("seed").get<std::uint64_t>(), assets, shape);
        if (b.values != s.flat() || b.header.at("hash").get<std::string>() != s.hash_)
            throw IoError("specialist snapshot does not match its seed and assets", path.string());
        return s;
    }

private:
    Matrix vision_raw(std::span<const shapes::Attributes> attrs) const {
        const shapes::ProtoCodec codec(shape_);
        Matrix x(attrs.size(), shapes::kProtoDim);
        for (std::size_t i = 0; i < attrs.size(); ++i) {
            const auto p = codec.encode(attrs[i]);
            std::copy(p.begin(), p.end(), x.row_span(i).begin());
        }
        return vision_.apply(x);
    }

    Matrix text_raw(std::span<const shapes::AttributeBins* const> bins,
                    std::span<const shapes::GrammarTrace* const> traces) const {
        Matrix f(bins.size(), featurizer_.width());
        for (std::size_t i = 0; i < bins.size(); ++i) featurizer_.write(*bins[i], *traces[i], f.row_span(i));
        Matrix z(bins.size(), kTextDim);
        as_eigen(z) = as_eigen(f) * as_eigen(text_.value);
        for (double& v : z.values()) v = std::tanh(v);
        return z;
    }

    std::vector<double> flat() const {
        std::vector<double> v;
        for (const Parameter* p : parameters()) v.insert(v.end(), p->value.values().begin(), p->value.values().end());
        for (const Calibration* c : {&vision_cal_, &text_cal_}) {
            v.insert(v.end(), c->shift.begin(), c->shift.end());
            v.insert(v.end(), c->scale.begin(), c->scale.end());
        }
        return v;
    }

    std::string compute_hash() const {
        Fnv1a h;
        h.update(std::span<const double>(flat()));
        return h.hex();
    }

    std::uint64_t seed_;
    const shapes::Assets* assets_;
    shapes::ShapeConfig shape_;
    TextFeaturizer featurizer_;
    Mlp vision_;
    Parameter text_;
    Calibration vision_cal_, text_cal_;
    std::string hash_;
};

// Reconstruction/translation loss in a domain's latent space. Proto: MSE over
// the 8 continuous components plus cross-entropy of the category, using the
// de-scaled one-hot slots (p + 1) / 2 as logits. Other domains: MSE.
inline Var domain_loss(Graph& g, Domain d, Var pred, Var target) {
    const Matrix& t = g.value(target);
    require(g.value(pred).rows() == t.rows() && g.value(pred).cols() == t.cols(), "domain_loss: shape mismatch");
    require(t.cols() == latent_dim(d), "domain_loss: width does not match the domain");
    if (d != Domain::proto) return g.mse(pred, target);
    constexpr std::size_t k = shapes::kCategoryCount;
    std::vector<std::size_t> labels(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (t(i, c) > t(i, best)) best = c;
        labels[i] = best;
    }
    const Var mse = g.mse(g.slice_cols(pred, k, shapes::kProtoDim - k), g.slice_cols(target, k, shapes::kProtoDim - k));
    const Var ce = g.softmax_cross_entropy(g.affine(g.slice_cols(pred, 0, k), 0.5, 0.5), std::move(labels));
    return g.add(mse, ce);
}

inline double domain_loss(Domain d, const Matrix& pred, const Matrix& target) {
    Graph g(false);
    return g.scalar(domain_loss(g, d, g.constant(pred), g.constant(target)));
}

// Loss of a perfect prediction in the proto domain: CE of logits (0, 0, 1).
inline double proto_loss_floor() { return std::log(1.0 + 2.0 / std::exp(1.0)); }

}  // namespace gw::specialists
