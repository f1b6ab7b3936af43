#pragma once

// Training objectives of the global workspace: translation, contrastive
// alignment, full cycles and demi-cycles, and their weighted combination.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>

#include "gw/core/model.hpp"

namespace gw::core {

inline constexpr double kCosineEpsilon = 1e-6;
inline constexpr double kInfoNceTemperature = 0.07;

// Rows of `a` and `b` describe the same items in domains model.domains()[0] and [1].
struct PairedBatch {
    Matrix a, b;
    std::size_t size() const { return a.rows(); }
};

// Independent items per domain.
struct UnpairedBatch {
    Matrix a, b;
};

struct TranslationTerms {
    Var a_to_b, b_to_a, mean;
};

inline TranslationTerms translation_terms(Graph& g, const GwModel& m, const PairedBatch& batch) {
    require(batch.a.rows() > 0, "translation loss: empty batch");
    require(batch.a.rows() == batch.b.rows(), "translation loss: paired batch rows differ");
    const auto [da, db] = m.domains();
    const Var za = g.constant(batch.a), zb = g.constant(batch.b);
    TranslationTerms t;
    t.a_to_b = specialists::domain_loss(g, db, m.translate(g, da, db, za), zb);
    t.b_to_a = specialists::domain_loss(g, da, m.translate(g, db, da, zb), za);
    t.mean = g.scale(g.add(t.a_to_b, t.b_to_a), 0.5);
    return t;
}

inline Var loss_translation(Graph& g, const GwModel& m, const PairedBatch& batch) {
    return translation_terms(g, m, batch).mean;
}

// Contrastive term between matched rows of two workspace batches.
inline Var contrastive_latents(Graph& g, Var ha, Var hb, ContrastiveMode mode = ContrastiveMode::literal) {
    const std::size_t B = g.value(ha).rows();
    require(B >= 2, "contrastive loss: batch needs at least two pairs");
    require(g.value(hb).rows() == B, "contrastive loss: paired batch rows differ");
    const Var cos = g.cosine_matrix(ha, hb);
    if (mode == ContrastiveMode::literal) {
        const Var p = g.clamp(cos, kCosineEpsilon, 1.0 - kCosineEpsilon);
        const Matrix eye = Matrix::identity(B);
        Matrix off(B, B, 1.0);
        for (std::size_t i = 0; i < B; ++i) off(i, i) = 0.0;
        const Var match = g.mul(g.log(p), g.constant(eye));
        const Var mismatch = g.mul(g.log(g.affine(p, -1.0, 1.0)), g.constant(off));
        return g.scale(g.sum(g.add(match, mismatch)), -1.0 / static_cast<double>(B * B));
    }
    std::vector<std::size_t> labels(B);
    std::iota(labels.begin(), labels.end(), 0);
    const Var logits = g.scale(cos, 1.0 / kInfoNceTemperature);
    const Var rows = g.softmax_cross_entropy(logits, labels);
    const Var cols = g.softmax_cross_entropy(g.transpose(logits), labels);
    return g.scale(g.add(rows, cols), 0.5);
}

inline Var loss_contrastive(Graph& g, const GwModel& m, const PairedBatch& batch,
                            ContrastiveMode mode = ContrastiveMode::literal) {
    require(batch.a.rows() >= 2, "contrastive loss: batch needs at least two pairs");
    require(batch.b.rows() == batch.a.rows(), "contrastive loss: paired batch rows differ");
    const auto [da, db] = m.domains();
    return contrastive_latents(g, m.encode(g, da, g.constant(batch.a)), m.encode(g, db, g.constant(batch.b)), mode);
}

namespace detail {

// 0.5 * (term for domain a + term for domain b); an empty side contributes 0.
template <class Term>
Var half_sum(Graph& g, const GwModel& m, const UnpairedBatch& batch, Term term) {
    require(batch.a.rows() > 0 || batch.b.rows() > 0, "cycle loss: both unpaired batches are empty");
    const auto [da, db] = m.domains();
    std::optional<Var> total;
    for (auto [d, z] : {std::pair{da, &batch.a}, std::pair{db, &batch.b}}) {
        if (z->rows() == 0) continue;
        const Var t = term(d, g.constant(*z));
        total = total ? g.add(*total, t) : t;
    }
    return g.scale(*total, 0.5);
}

}  // namespace detail

inline Var loss_cycle(Graph& g, const GwModel& m, const UnpairedBatch& batch) {
    return detail::half_sum(g, m, batch, [&](Domain d, Var z) {
        const Domain o = m.other(d);
        return g.mse(m.translate(g, o, d, m.translate(g, d, o, z)), z);
    });
}

inline Var loss_demicycle(Graph& g, const GwModel& m, const UnpairedBatch& batch) {
    return detail::half_sum(g, m, batch, [&](Domain d, Var z) { return g.mse(m.translate(g, d, d, z), z); });
}

struct LossBreakdown {
    std::optional<double> translation, contrastive, cycle, demi_cycle;
    double total = 0.0;
};

struct TotalLoss {
    Var total;  // weighted sum of the gradient-carrying terms
    LossBreakdown breakdown;
};

namespace detail {

enum Term : std::size_t { kTr, kCont, kCy, kDcy, kTerms };

// Builds the requested terms on `g` with one encoder pass per domain over its
// paired and unpaired items, and one decoder pass per domain over everything
// it decodes. Numerically the same as the separate loss_* functions.
inline std::array<std::optional<Var>, kTerms> fused_terms(Graph& g, const GwModel& m, const PairedBatch& paired,
                                                          const UnpairedBatch& unpaired, ContrastiveMode mode,
                                                          std::array<bool, kTerms> want) {
    const std::array<Domain, 2> dom = m.domains();
    const std::array<const Matrix*, 2> zp{&paired.a, &paired.b}, zu{&unpaired.a, &unpaired.b};
    const bool use_p = want[kTr] || want[kCont];
    const bool use_u = want[kCy] || want[kDcy];
    const std::size_t P = use_p ? paired.size() : 0;
    std::array<std::size_t, 2> U{use_u ? zu[0]->rows() : 0, use_u ? zu[1]->rows() : 0};

    std::array<std::optional<Var>, 2> Zp, Zu, Hp, Hu;
    for (std::size_t s = 0; s < 2; ++s) {
        std::vector<Var> parts;
        if (P > 0) parts.push_back(*(Zp[s] = g.constant(*zp[s])));
        if (U[s] > 0) parts.push_back(*(Zu[s] = g.constant(*zu[s])));
        if (parts.empty()) continue;
        const Var h = m.encode(g, dom[s], g.concat_rows(parts));
        if (P > 0) Hp[s] = g.slice_rows(h, 0, P);
        if (U[s] > 0) Hu[s] = g.slice_rows(h, P, U[s]);
    }

    // Decoder t sees translations from the other side (paired, then cycle
    // first legs) followed by its own demi-cycle reconstructions.
    std::array<std::optional<Var>, 2> pred, leg, recon;
    for (std::size_t t = 0; t < 2; ++t) {
        const std::size_t o = 1 - t;
        std::vector<Var> parts;
        std::vector<std::optional<Var>*> slots;
        if (want[kTr] && P > 0) parts.push_back(*Hp[o]), slots.push_back(&pred[t]);
        if (want[kCy] && U[o] > 0) parts.push_back(*Hu[o]), slots.push_back(&leg[o]);
        if (want[kDcy] && U[t] > 0) parts.push_back(*Hu[t]), slots.push_back(&recon[t]);
        if (parts.empty()) continue;
        const Var y = m.decode(g, dom[t], g.concat_rows(parts));
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const std::size_t n = g.value(parts[i]).rows();
            *slots[i] = g.slice_rows(y, off, n);
            off += n;
        }
    }

    std::array<std::optional<Var>, kTerms> out;
    if (want[kTr] && P > 0) {
        const Var ab = specialists::domain_loss(g, dom[1], *pred[1], *Zp[1]);
        const Var ba = specialists::domain_loss(g, dom[0], *pred[0], *Zp[0]);
        out[kTr] = g.scale(g.add(ab, ba), 0.5);
    }
    if (want[kCont] && P >= 2) out[kCont] = contrastive_latents(g, *Hp[0], *Hp[1], mode);
    auto half = [&](std::array<std::optional<Var>, 2> parts) -> std::optional<Var> {
        std::optional<Var> sum;
        for (const auto& p : parts)
            if (p) sum = sum ? g.add(*sum, *p) : *p;
        if (!sum) return std::nullopt;
        return g.scale(*sum, 0.5);
    };
    if (want[kCy]) {
        std::array<std::optional<Var>, 2> parts;
        for (std::size_t s = 0; s < 2; ++s) {
            if (!leg[s]) continue;
            const Var back = m.translate(g, dom[1 - s], dom[s], *leg[s]);
            parts[s] = g.mse(back, *Zu[s]);
        }
        out[kCy] = half(parts);
    }
    if (want[kDcy]) {
        std::array<std::optional<Var>, 2> parts;
        for (std::size_t s = 0; s < 2; ++s)
            if (recon[s]) parts[s] = g.mse(*recon[s], *Zu[s]);
        out[kDcy] = half(parts);
    }
    return out;
}

}  // namespace detail

// Terms with a positive weight are built on `g`; the others are evaluated on a
// throwaway no-gradient graph, reported, and left out of `total`. A term is
// absent when its batch cannot support it (no pairs, fewer than two pairs for
// the contrastive term, no unpaired items) or when it is inactive and
// `evaluate_inactive` is off.
inline TotalLoss total_loss(Graph& g, const GwModel& m, const LossWeights& w, const PairedBatch& paired,
                            const UnpairedBatch& unpaired, ContrastiveMode mode = ContrastiveMode::literal,
                            bool evaluate_inactive = true) {
    using namespace detail;
    w.validate();
    require(paired.a.rows() == paired.b.rows(), "total loss: paired batch rows differ");
    const bool has_unpaired = unpaired.a.rows() > 0 || unpaired.b.rows() > 0;
    const std::array<bool, kTerms> available{paired.size() > 0, paired.size() >= 2, has_unpaired, has_unpaired};
    const std::array<double, kTerms> weight{w.translation, w.contrastive, w.cycle, w.demi_cycle};
    std::array<bool, kTerms> active{}, inactive{};
    for (std::size_t k = 0; k < kTerms; ++k) {
        active[k] = available[k] && weight[k] > 0.0;
        inactive[k] = available[k] && weight[k] == 0.0 && evaluate_inactive;
    }
    std::array<std::optional<double>, kTerms> value;
    TotalLoss out;
    std::optional<Var> total;
    const auto built = fused_terms(g, m, paired, unpaired, mode, active);
    for (std::size_t k = 0; k < kTerms; ++k) {
        if (!active[k]) continue;
        const Var scaled = g.scale(*built[k], weight[k]);
        total = total ? g.add(*total, scaled) : scaled;
        value[k] = g.scalar(*built[k]);
        out.breakdown.total += weight[k] * *value[k];
    }
    if (std::find(inactive.begin(), inactive.end(), true) != inactive.end()) {
        Graph eval(false);
        const auto side = fused_terms(eval, m, paired, unpaired, mode, inactive);
        for (std::size_t k = 0; k < kTerms; ++k)
            if (inactive[k]) value[k] = eval.scalar(*side[k]);
    }
    out.breakdown.translation = value[kTr];
    out.breakdown.contrastive = value[kCont];
    out.breakdown.cycle = value[kCy];
    out.breakdown.demi_cycle = value[kDcy];
    out.total = total ? *total : g.scalar_constant(0.0);
    return out;
}

}  // namespace gw::core
