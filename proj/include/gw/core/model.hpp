#pragma once

// Global-workspace model over two domains: one encoder into the shared
// workspace and one decoder out of it per domain.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gw/common/blob.hpp"
#include "gw/common/error.hpp"
#include "gw/common/rng.hpp"
#include "gw/diffmath/graph.hpp"
#include "gw/diffmath/mlp.hpp"
#include "gw/specialists/specialists.hpp"

namespace gw::core {

using namespace gw::diff;
using specialists::Domain;

enum class ModelVariant : std::uint8_t {
    translation_only,
    trans_cont,
    trans_full_cycles,
    trans_demi_cycles,
    all_sup_all_cycles
};

inline constexpr std::array<ModelVariant, 5> kAllVariants = {
    ModelVariant::translation_only, ModelVariant::trans_cont, ModelVariant::trans_full_cycles,
    ModelVariant::trans_demi_cycles, ModelVariant::all_sup_all_cycles};

inline std::string_view variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::translation_only: return "translation_only";
        case ModelVariant::trans_cont: return "trans_cont";
        case ModelVariant::trans_full_cycles: return "trans_full_cycles";
        case ModelVariant::trans_demi_cycles: return "trans_demi_cycles";
        case ModelVariant::all_sup_all_cycles: return "all_sup_all_cycles";
    }
    return "?";
}

inline ModelVariant variant_from_name(std::string_view s) {
    for (ModelVariant v : kAllVariants)
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

// Variants whose training enforces workspace alignment, either with the
// contrastive term directly or through demi-cycles combined with translation.
inline bool has_gw(ModelVariant v) {
    return v == ModelVariant::trans_cont || v == ModelVariant::trans_demi_cycles ||
           v == ModelVariant::all_sup_all_cycles;
}

enum class ContrastiveMode : std::uint8_t { literal, infonce };

inline std::string_view contrastive_mode_name(ContrastiveMode m) {
    return m == ContrastiveMode::literal ? "literal" : "infonce";
}

inline ContrastiveMode contrastive_mode_from_name(std::string_view s) {
    if (s == "literal") return ContrastiveMode::literal;
    if (s == "infonce") return ContrastiveMode::infonce;
    throw ConfigError("unknown contrastive mode '" + std::string(s) + "'");
}

struct LossWeights {
    double translation = 0.0, contrastive = 0.0, cycle = 0.0, demi_cycle = 0.0;

    friend bool operator==(const LossWeights&, const LossWeights&) = default;

    void validate() const {
        for (double a : {translation, contrastive, cycle, demi_cycle})
            require_config(a >= 0.0 && std::isfinite(a), "loss weights must be finite and non-negative");
    }

    // The terms a variant trains with are exactly those with a positive weight.
    void check_variant(ModelVariant v) const {
        validate();
        const std::array<bool, 4> want = [&]() -> std::array<bool, 4> {
            switch (v) {
                case ModelVariant::translation_only: return {true, false, false, false};
                case ModelVariant::trans_cont: return {true, true, false, false};
                case ModelVariant::trans_full_cycles: return {true, false, true, false};
                case ModelVariant::trans_demi_cycles: return {true, false, false, true};
                case ModelVariant::all_sup_all_cycles: return {true, true, true, true};
            }
            return {};
        }();
        const std::array<double, 4> got = {translation, contrastive, cycle, demi_cycle};
        for (std::size_t i = 0; i < 4; ++i)
            require_config((got[i] > 0.0) == want[i],
                           "loss weights do not match variant " + std::string(variant_name(v)));
    }

    LossWeights scaled(double s) const { return {translation * s, contrastive * s, cycle * s, demi_cycle * s}; }

    nlohmann::json to_json() const {
        return {{"translation", translation}, {"contrastive", contrastive}, {"cycle", cycle}, {"demi_cycle", demi_cycle}};
    }

    static LossWeights from_json(const nlohmann::json& j) {
        LossWeights w{j.value("translation", 0.0), j.value("contrastive", 0.0), j.value("cycle", 0.0),
                      j.value("demi_cycle", 0.0)};
        w.validate();
        return w;
    }
};

// Keeps only the coefficients a variant uses.
inline LossWeights variant_weights(ModelVariant v, const LossWeights& all) {
    LossWeights w{all.translation, 0.0, 0.0, 0.0};
    if (v == ModelVariant::trans_cont || v == ModelVariant::all_sup_all_cycles) w.contrastive = all.contrastive;
    if (v == ModelVariant::trans_full_cycles || v == ModelVariant::all_sup_all_cycles) w.cycle = all.cycle;
    if (v == ModelVariant::trans_demi_cycles || v == ModelVariant::all_sup_all_cycles) w.demi_cycle = all.demi_cycle;
    return w;
}

struct ModelConfig {
    std::array<Domain, 2> domains{Domain::vision, Domain::text};
    std::size_t gw_dim = 12;
    std::size_t hidden = 256;
    std::size_t hidden_layers = 3;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"domains", {specialists::domain_name(domains[0]), specialists::domain_name(domains[1])}},
                {"gw_dim", gw_dim},
                {"hidden", hidden},
                {"hidden_layers", hidden_layers},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.domains = {specialists::domain_from_name(j.at("domains").at(0).get<std::string>()),
                     specialists::domain_from_name(j.at("domains").at(1).get<std::string>())};
        c.gw_dim = j.at("gw_dim").get<std::size_t>();
        c.hidden = j.at("hidden").get<std::size_t>();
        c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    }
};

class GwModel {
public:
    static constexpr const char* kMagic = "GWCKPT1";

    explicit GwModel(const ModelConfig& cfg = {}) : cfg_(cfg) {
        require(cfg.domains[0] != cfg.domains[1], "GwModel: the two domains must differ");
        require(cfg.gw_dim > 0 && cfg.hidden > 0, "GwModel: widths must be positive");
        Rng rng(derive_seed(cfg.seed, 0x6a0d));
        for (std::size_t s = 0; s < 2; ++s) {
            const std::size_t d = specialists::latent_dim(cfg.domains[s]);
            const std::string n(specialists::domain_name(cfg.domains[s]));
            std::vector<std::size_t> enc{d}, dec{cfg.gw_dim};
            for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
                enc.push_back(cfg.hidden);
                dec.push_back(cfg.hidden);
            }
            enc.push_back(cfg.gw_dim);
            dec.push_back(d);
            encoders_[s] = Mlp("enc_" + n, enc, Activation::relu);
            decoders_[s] = Mlp("dec_" + n, dec, Activation::relu);
            encoders_[s].init_uniform(rng);
            decoders_[s].init_uniform(rng);
        }
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    const std::array<Domain, 2>& domains() const noexcept { return cfg_.domains; }
    std::size_t gw_dim() const noexcept { return cfg_.gw_dim; }
    bool active(Domain d) const { return d == cfg_.domains[0] || d == cfg_.domains[1]; }
    Domain other(Domain d) const { return cfg_.domains[side(d) == 0 ? 1 : 0]; }

    Mlp& encoder(Domain d) { return encoders_[side(d)]; }
    Mlp& decoder(Domain d) { return decoders_[side(d)]; }
    const Mlp& encoder(Domain d) const { return encoders_[side(d)]; }
    const Mlp& decoder(Domain d) const { return decoders_[side(d)]; }

    Var encode(Graph& g, Domain d, Var z) const { return encoder(d).forward(g, z); }
    Var decode(Graph& g, Domain d, Var h) const { return decoder(d).forward(g, h); }
    Var translate(Graph& g, Domain from, Domain to, Var z) const { return decode(g, to, encode(g, from, z)); }

    Matrix encode(Domain d, const Matrix& z) const { return encoder(d).apply(z); }
    Matrix translate(Domain from, Domain to, const Matrix& z) const { return decoder(to).apply(encoder(from).apply(z)); }
    Matrix cycle(Domain d, const Matrix& z) const { return translate(other(d), d, translate(d, other(d), z)); }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (Mlp* m : {&encoders_[0], &decoders_[0], &encoders_[1], &decoders_[1]})
            for (Parameter* p : m->parameters()) out.push_back(p);
        return out;
    }

    std::vector<const Parameter*> parameters() const {
        std::vector<const Parameter*> out;
        for (const Mlp* m : {&encoders_[0], &decoders_[0], &encoders_[1], &decoders_[1]})
            for (const Parameter* p : m->parameters()) out.push_back(p);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Parameter* p : parameters()) n += p->value.size();
        return n;
    }

    void save(const std::filesystem::path& path, nlohmann::json extra = nlohmann::json::object()) const {
        nlohmann::json h = {{"format", kMagic}, {"model", cfg_.to_json()}, {"extra", std::move(extra)}};
        nlohmann::json shapes = nlohmann::json::array();
        std::vector<double> flat;
        for (const Parameter* p : parameters()) {
            shapes.push_back({p->name, p->value.rows(), p->value.cols()});
            flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
        }
        h["parameters"] = shapes;
        write_blob(path, kMagic, h, flat);
    }

    static GwModel load(const std::filesystem::path& path, nlohmann::json* extra = nullptr) {
        const Blob b = read_blob(path, kMagic);
        GwModel m;
        try {
            m = GwModel(ModelConfig::from_json(b.header.at("model")));
            if (extra) *extra = b.header.value("extra", nlohmann::json::object());
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("malformed checkpoint header: ") + e.what(), path.string());
        }
        std::size_t off = 0;
        auto params = m.parameters();
        const auto& shapes = b.header.at("parameters");
        if (shapes.size() != params.size()) throw IoError("checkpoint parameter list mismatch", path.string());
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter* p = params[i];
            if (shapes[i].at(0).get<std::string>() != p->name || shapes[i].at(1).get<std::size_t>() != p->value.rows() ||
                shapes[i].at(2).get<std::size_t>() != p->value.cols())
                throw IoError("checkpoint parameter '" + p->name + "' has the wrong shape", path.string());
            std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(off), p->value.size(), p->value.values().begin());
            off += p->value.size();
        }
        if (off != b.values.size()) throw IoError("checkpoint has trailing values", path.string());
        return m;
    }

private:
    std::size_t side(Domain d) const {
        if (d == cfg_.domains[0]) return 0;
        if (d == cfg_.domains[1]) return 1;
        throw ContractViolation("domain '" + std::string(specialists::domain_name(d)) + "' is not part of this model");
    }

    ModelConfig cfg_;
    std::array<Mlp, 2> encoders_, decoders_;
};

// Sets every encoder and decoder to an exact identity that pads (or truncates)
// to the target width. Each ReLU stack carries x through as (relu(x), relu(-x)).
inline void set_identity(GwModel& m) {
    auto fill = [](Mlp& net) {
        const std::size_t in = net.in_width(), out = net.out_width();
        const std::size_t carry = std::min(in, out);
        for (std::size_t l = 0; l < net.layers(); ++l) {
            Matrix& W = net.weight(l).value;
            net.bias(l).value.fill(0.0);
            W.fill(0.0);
            const bool first = l == 0, last = l + 1 == net.layers();
            require(last || W.rows() >= 2 * carry, "identity fixture needs hidden width >= 2 x latent width");
            for (std::size_t k = 0; k < carry; ++k) {
                if (first && last) {
                    W(k, k) = 1.0;
                } else if (first) {
                    W(k, k) = 1.0;
                    W(carry + k, k) = -1.0;
                } else if (last) {
                    W(k, k) = 1.0;
                    W(k, carry + k) = -1.0;
                } else {
                    W(k, k) = 1.0;
                    W(carry + k, carry + k) = 1.0;
                }
            }
        }
    };
    for (Domain d : m.domains()) {
        fill(m.encoder(d));
        fill(m.decoder(d));
    }
}

}  // namespace gw::core
