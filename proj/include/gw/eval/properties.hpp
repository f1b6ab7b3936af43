#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "gw/train/trainer.hpp"

namespace gw::eval {

using namespace gw::train;

struct RunMeta {
    ModelVariant variant = ModelVariant::translation_only;
    LossWeights weights;
    std::array<Domain, 2> domains{Domain::vision, Domain::text};
    std::size_t N = 0, M = 0;
    std::uint64_t split_seed = 0, init_seed = 0, batch_seed = 0;
    ContrastiveMode mode = ContrastiveMode::literal;
    std::size_t steps = 0;

    // M is resolved against the training-set size K.
    static RunMeta from_config(const TrainConfig& c, std::size_t K) {
        return {c.variant,    c.weights,    c.domains,      c.N,     c.M == kAllRemaining ? K - c.N : c.M,
                c.split_seed, c.init_seed,  c.batch_seed,   c.mode,  c.steps};
    }

    nlohmann::json to_json() const {
        return {{"variant", variant_name(variant)},
                {"weights", weights.to_json()},
                {"domains", {specialists::domain_name(domains[0]), specialists::domain_name(domains[1])}},
                {"N", N},
                {"M", M},
                {"seeds", {{"split", split_seed}, {"init", init_seed}, {"batch", batch_seed}}},
                {"contrastive_mode", contrastive_mode_name(mode)},
                {"steps", steps}};
    }
};

// The four properties on a fixed held-out set, with the contrastive loss in
// both modes and translation per direction.
struct PropertyReport {
    double tr_a_to_b = 0, tr_b_to_a = 0, translation = 0;
    double contrastive_literal = 0, contrastive_infonce = 0;
    double cycle = 0, demi_cycle = 0;
    RunMeta meta;

    double contrastive(ContrastiveMode m) const {
        return m == ContrastiveMode::literal ? contrastive_literal : contrastive_infonce;
    }

    nlohmann::json to_json() const {
        return {{"translation", {{"a_to_b", tr_a_to_b}, {"b_to_a", tr_b_to_a}, {"mean", translation}}},
                {"contrastive", {{"literal", contrastive_literal}, {"infonce", contrastive_infonce}}},
                {"cycle", cycle},
                {"demi_cycle", demi_cycle},
                {"meta", meta.to_json()}};
    }
};

inline PropertyReport eval_properties(const GwModel& m, const LatentTable& test, const RunMeta& meta) {
    const LossReport lit = measure_losses(m, test, ContrastiveMode::literal);
    const LossReport inf = measure_losses(m, test, ContrastiveMode::infonce);
    PropertyReport r{lit.tr_a_to_b, lit.tr_b_to_a,  lit.translation, lit.contrastive, inf.contrastive,
                     lit.cycle,     lit.demi_cycle, meta};
    for (double v : {r.tr_a_to_b, r.tr_b_to_a, r.translation, r.contrastive_literal, r.contrastive_infonce, r.cycle,
                     r.demi_cycle})
        if (!std::isfinite(v)) throw NumericError("eval_properties: non-finite property", 0);
    return r;
}

}  // namespace gw::eval
