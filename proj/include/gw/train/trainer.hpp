#pragma once

// Semi-supervised training of a GwModel: the paired/unpaired split, the batch
// sampler, the Adam loop with periodic evaluation, and coefficient selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gw/common/error.hpp"
#include "gw/common/io.hpp"
#include "gw/common/rng.hpp"
#include "gw/core/losses.hpp"
#include "gw/diffmath/adam.hpp"

namespace gw::train {

using namespace gw::core;

// S = first N of a seeded permutation of [0, K); the unpaired pool of both
// domains is the first N + M of the same permutation.
struct DatasetSplit {
    std::size_t K = 0, N = 0, M = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> paired;
    std::vector<std::size_t> unpaired;

    std::string to_csv() const {
        std::string out = "index,paired\n";
        for (std::size_t i = 0; i < unpaired.size(); ++i)
            out += std::to_string(unpaired[i]) + "," + (i < N ? "1" : "0") + "\n";
        return out;
    }
};

inline constexpr std::size_t kAllRemaining = static_cast<std::size_t>(-1);

inline DatasetSplit split_dataset(std::size_t K, std::size_t N, std::size_t M, std::uint64_t seed) {
    if (M == kAllRemaining) {
        require_config(N <= K, "split: N exceeds the dataset size");
        M = K - N;
    }
    require_config(N <= K && M <= K - N, "split: need N + M <= K");
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, 0x5b17));
    shuffle(perm, rng);
    DatasetSplit s{K, N, M, seed, {}, {}};
    s.paired.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(N));
    s.unpaired.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(N + M));
    return s;
}

struct Batch {
    std::vector<std::size_t> paired, unpaired_a, unpaired_b;
};

// Each slot is paired with probability 1/2, otherwise an unpaired item of a
// uniformly chosen domain. Every slot consumes exactly three draws, so the
// stream stays aligned whatever the pool sizes are.
inline Batch make_batch(const DatasetSplit& split, std::size_t batch_size, Rng& rng) {
    require(batch_size >= 4, "make_batch: batch size must be at least 4");
    require_config(!split.paired.empty(), "make_batch: the paired pool is empty");
    Batch b;
    for (std::size_t i = 0; i < batch_size; ++i) {
        const bool paired = coin(rng);
        const bool domain_a = coin(rng);
        const std::uint64_t r = rng();
        auto pick = [&](const std::vector<std::size_t>& pool) {
            return pool[static_cast<std::size_t>((static_cast<unsigned __int128>(r) * pool.size()) >> 64)];
        };
        if (paired)
            b.paired.push_back(pick(split.paired));
        else
            (domain_a ? b.unpaired_a : b.unpaired_b).push_back(pick(split.unpaired));
    }
    return b;
}

// Latents of one set of records in the model's two domains, row-aligned.
struct LatentTable {
    Matrix a, b;
    std::size_t size() const { return a.rows(); }
};

inline LatentTable latent_table(const specialists::Specialists& sp, std::span<const shapes::Record> records,
                                std::array<specialists::Domain, 2> domains) {
    return {sp.embed(domains[0], records), sp.embed(domains[1], records)};
}

struct TrainConfig {
    ModelVariant variant = ModelVariant::translation_only;
    LossWeights weights{1.0, 0.0, 0.0, 0.0};
    std::array<specialists::Domain, 2> domains{specialists::Domain::vision, specialists::Domain::text};
    std::size_t N = 1000;
    std::size_t M = kAllRemaining;
    std::size_t batch_size = 64;
    std::size_t steps = 30000;
    double learning_rate = 1e-3;
    std::uint64_t split_seed = 0, init_seed = 0, batch_seed = 0;
    ContrastiveMode mode = ContrastiveMode::literal;
    std::size_t eval_every = 1000;
    std::size_t train_eval_size = 1000;
    std::size_t hidden = 256;
    // Skip the variant/weights consistency check; used by the single-term
    // calibration runs of coefficient selection.
    bool free_weights = false;

    void validate(std::size_t K) const {
        if (free_weights) {
            weights.validate();
            require_config(weights.translation + weights.contrastive + weights.cycle + weights.demi_cycle > 0.0,
                           "train: all loss weights are zero");
        } else {
            weights.check_variant(variant);
        }
        require_config(N >= 1, "train: N must be at least 1");
        require_config(N <= K, "train: N exceeds the training set");
        require_config(M == kAllRemaining || N + M <= K, "train: N + M exceeds the training set");
        require_config(batch_size >= 4, "train: batch size must be at least 4");
        require_config(steps >= 1 && eval_every >= 1, "train: steps and eval cadence must be positive");
        require_config(learning_rate > 0.0, "train: learning rate must be positive");
    }

    nlohmann::json to_json() const {
        return {{"variant", variant_name(variant)},
                {"weights", weights.to_json()},
                {"domains", {specialists::domain_name(domains[0]), specialists::domain_name(domains[1])}},
                {"N", N},
                {"M", M == kAllRemaining ? nlohmann::json("all") : nlohmann::json(M)},
                {"batch_size", batch_size},
                {"steps", steps},
                {"learning_rate", learning_rate},
                {"seeds", {{"split", split_seed}, {"init", init_seed}, {"batch", batch_seed}}},
                {"contrastive_mode", contrastive_mode_name(mode)},
                {"eval_every", eval_every},
                {"train_eval_size", train_eval_size},
                {"hidden", hidden},
                {"free_weights", free_weights}};
    }

    // Missing keys keep their defaults; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j) { return TrainConfig{}.merged(j); }

    TrainConfig merged(const nlohmann::json& j) const {
        TrainConfig c = *this;
        static const std::vector<std::string> known = {"variant",     "weights",         "domains",       "N",
                                                       "M",           "batch_size",      "steps",         "learning_rate",
                                                       "seeds",       "contrastive_mode", "eval_every",   "train_eval_size",
                                                       "hidden",      "free_weights"};
        try {
            for (const auto& [k, v] : j.items())
                require_config(std::find(known.begin(), known.end(), k) != known.end(), "train config: unknown key '" + k + "'");
            if (j.contains("variant")) c.variant = variant_from_name(j["variant"].get<std::string>());
            if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
            if (j.contains("domains"))
                c.domains = {specialists::domain_from_name(j["domains"].at(0).get<std::string>()),
                             specialists::domain_from_name(j["domains"].at(1).get<std::string>())};
            if (j.contains("N")) c.N = j["N"].get<std::size_t>();
            if (j.contains("M"))
                c.M = j["M"].is_string() && j["M"] == "all" ? kAllRemaining : j["M"].get<std::size_t>();
            if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
            if (j.contains("steps")) c.steps = j["steps"].get<std::size_t>();
            if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
            if (j.contains("seeds")) {
                c.split_seed = j["seeds"].value("split", c.split_seed);
                c.init_seed = j["seeds"].value("init", c.init_seed);
                c.batch_seed = j["seeds"].value("batch", c.batch_seed);
            }
            if (j.contains("contrastive_mode"))
                c.mode = contrastive_mode_from_name(j["contrastive_mode"].get<std::string>());
            if (j.contains("eval_every")) c.eval_every = j["eval_every"].get<std::size_t>();
            if (j.contains("train_eval_size")) c.train_eval_size = j["train_eval_size"].get<std::size_t>();
            if (j.contains("hidden")) c.hidden = j["hidden"].get<std::size_t>();
            if (j.contains("free_weights")) c.free_weights = j["free_weights"].get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("train config: ") + e.what());
        }
        return c;
    }

    void set_seed(std::uint64_t s) { split_seed = init_seed = batch_seed = s; }
};

// All four raw losses on a fixed set, with translation reported per direction.
struct LossReport {
    double tr_a_to_b = 0, tr_b_to_a = 0, translation = 0, contrastive = 0, cycle = 0, demi_cycle = 0;

    double weighted(const LossWeights& w) const {
        return w.translation * translation + w.contrastive * contrastive + w.cycle * cycle + w.demi_cycle * demi_cycle;
    }
};

// Translation, cycle and demi-cycle are means over all rows. The contrastive
// loss depends on the batch size, so it is averaged over consecutive chunks
// of `chunk` pairs, weighted by chunk size (a trailing single pair is dropped).
inline LossReport measure_losses(const GwModel& m, const LatentTable& t, ContrastiveMode mode,
                                 std::size_t chunk = 64) {
    require(t.size() >= 2, "measure_losses: need at least two items");
    LossReport r;
    Graph g(false);
    const PairedBatch all{t.a, t.b};
    const auto tr = translation_terms(g, m, all);
    r.tr_a_to_b = g.scalar(tr.a_to_b);
    r.tr_b_to_a = g.scalar(tr.b_to_a);
    r.translation = g.scalar(tr.mean);
    const UnpairedBatch u{t.a, t.b};
    r.cycle = g.scalar(loss_cycle(g, m, u));
    r.demi_cycle = g.scalar(loss_demicycle(g, m, u));
    double weighted = 0.0, count = 0.0;
    for (std::size_t start = 0; start < t.size(); start += chunk) {
        const std::size_t n = std::min(chunk, t.size() - start);
        if (n < 2) break;
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), start);
        Graph h(false);
        weighted += static_cast<double>(n) *
                    h.scalar(loss_contrastive(h, m, {t.a.gather_rows(rows), t.b.gather_rows(rows)}, mode));
        count += static_cast<double>(n);
    }
    r.contrastive = weighted / count;
    return r;
}

struct MetricsRow {
    std::size_t step = 0;
    std::string split;  // "train" or "test"
    LossReport losses;
    double total = 0.0;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "step,split,loss_tr,loss_cont,loss_cy,loss_dcy,loss_total\n";
    for (const auto& r : rows)
        out += std::to_string(r.step) + "," + r.split + "," + fmt_double(r.losses.translation) + "," +
               fmt_double(r.losses.contrastive) + "," + fmt_double(r.losses.cycle) + "," +
               fmt_double(r.losses.demi_cycle) + "," + fmt_double(r.total) + "\n";
    return out;
}

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t step, const std::string& detail)
        : std::runtime_error("non-finite loss at step " + std::to_string(step) + ": " + detail), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

struct TrainResult {
    GwModel model;
    std::vector<MetricsRow> history;
    LossReport final_test;
};

inline std::string describe(const LossBreakdown& b) {
    auto f = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string("-"); };
    return "tr=" + f(b.translation) + " cont=" + f(b.contrastive) + " cy=" + f(b.cycle) + " dcy=" + f(b.demi_cycle);
}

// Runs Adam on the variant's weighted loss over freshly drawn batches. Train
// metrics use the first `train_eval_size` paired items of the split (paired
// terms) and unpaired items (cycle terms); test metrics use the whole test set.
inline TrainResult train(const TrainConfig& cfg, const DatasetSplit& split, const LatentTable& train_set,
                         const LatentTable& test_set,
                         const std::function<void(const MetricsRow&)>& on_eval = {}) {
    cfg.validate(train_set.size());
    require(split.K == train_set.size(), "train: split does not match the training set");
    ModelConfig mc;
    mc.domains = cfg.domains;
    mc.hidden = cfg.hidden;
    mc.seed = cfg.init_seed;
    TrainResult result{GwModel(mc), {}, {}};
    GwModel& model = result.model;
    require(train_set.a.cols() == specialists::latent_dim(cfg.domains[0]) &&
                train_set.b.cols() == specialists::latent_dim(cfg.domains[1]),
            "train: latent widths do not match the configured domains");

    const std::size_t n_eval = std::min(cfg.train_eval_size, split.paired.size());
    const std::size_t u_eval = std::min(cfg.train_eval_size, split.unpaired.size());
    const std::vector<std::size_t> eval_pairs(split.paired.begin(), split.paired.begin() + static_cast<std::ptrdiff_t>(n_eval));
    const std::vector<std::size_t> eval_unpaired(split.unpaired.begin(),
                                                 split.unpaired.begin() + static_cast<std::ptrdiff_t>(u_eval));
    const LatentTable train_eval{train_set.a.gather_rows(eval_pairs), train_set.b.gather_rows(eval_pairs)};
    const UnpairedBatch train_unpaired{train_set.a.gather_rows(eval_unpaired), train_set.b.gather_rows(eval_unpaired)};

    auto evaluate = [&](std::size_t step) {
        MetricsRow tr{step, "train", {}, 0.0};
        if (train_eval.size() >= 2) {
            tr.losses = measure_losses(model, train_eval, cfg.mode, cfg.batch_size);
        } else {
            Graph g(false);
            tr.losses.translation = g.scalar(loss_translation(g, model, {train_eval.a, train_eval.b}));
            tr.losses.contrastive = std::nan("");
        }
        Graph g(false);
        tr.losses.cycle = g.scalar(loss_cycle(g, model, train_unpaired));
        tr.losses.demi_cycle = g.scalar(loss_demicycle(g, model, train_unpaired));
        tr.total = tr.losses.weighted(cfg.weights);
        MetricsRow te{step, "test", measure_losses(model, test_set, cfg.mode, cfg.batch_size), 0.0};
        te.total = te.losses.weighted(cfg.weights);
        for (const MetricsRow* row : {&tr, &te}) {
            for (double v : {row->losses.translation, row->losses.cycle, row->losses.demi_cycle, row->total})
                if (!std::isfinite(v)) throw TrainingDiverged(step, "evaluation on " + row->split + " is not finite");
            result.history.push_back(*row);
            if (on_eval) on_eval(*row);
        }
        result.final_test = te.losses;
    };

    Adam adam(AdamConfig{cfg.learning_rate});
    Rng rng(derive_seed(cfg.batch_seed, 0xba7c));
    auto params = model.parameters();
    const std::vector<const Parameter*> cparams(params.begin(), params.end());
    evaluate(0);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const Batch b = make_batch(split, cfg.batch_size, rng);
        const PairedBatch pb{train_set.a.gather_rows(b.paired), train_set.b.gather_rows(b.paired)};
        const UnpairedBatch ub{train_set.a.gather_rows(b.unpaired_a), train_set.b.gather_rows(b.unpaired_b)};
        Graph g;
        TotalLoss t;
        try {
            t = total_loss(g, model, cfg.weights, pb, ub, cfg.mode, false);
        } catch (const NumericError& e) {
            throw TrainingDiverged(step, e.what());
        }
        if (!std::isfinite(t.breakdown.total)) throw TrainingDiverged(step, describe(t.breakdown));
        g.backward(t.total);
        adam.step(params, g.gradients(cparams));
        if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step);
    }
    return result;
}

// Weights that equalize the two final losses: w_tr * tr = w_cont * cont, w_tr + w_cont = 1.
struct ScoreWeights {
    double translation = 0.5, contrastive = 0.5;
    bool fallback = false;
};

inline ScoreWeights calibrate_score_weights(double final_translation, double final_contrastive) {
    if (!(final_translation > 0.0) || !(final_contrastive > 0.0) || !std::isfinite(final_translation) ||
        !std::isfinite(final_contrastive))
        return {0.5, 0.5, true};
    const double s = final_translation + final_contrastive;
    return {final_contrastive / s, final_translation / s, false};
}

// alpha_tr = 1 and every active term of the variant drawn from `values`.
inline std::vector<LossWeights> coefficient_grid(ModelVariant v, const std::vector<double>& values = {0.1, 1.0, 10.0}) {
    require_config(!values.empty(), "coefficient grid: no values");
    const LossWeights mask = variant_weights(v, {1.0, 1.0, 1.0, 1.0});
    std::vector<LossWeights> grid{{1.0, 0.0, 0.0, 0.0}};
    auto expand = [&](double active, auto setter) {
        if (active == 0.0) return;
        std::vector<LossWeights> next;
        for (const auto& w : grid)
            for (double x : values) {
                LossWeights n = w;
                setter(n, x);
                next.push_back(n);
            }
        grid = std::move(next);
    };
    expand(mask.contrastive, [](LossWeights& w, double x) { w.contrastive = x; });
    expand(mask.cycle, [](LossWeights& w, double x) { w.cycle = x; });
    expand(mask.demi_cycle, [](LossWeights& w, double x) { w.demi_cycle = x; });
    return grid;
}

struct GridResult {
    LossWeights weights;
    LossReport test;
    double score = 0.0;
};

struct Selection {
    LossWeights best;
    double best_score = 0.0;
    std::vector<GridResult> results;
};

inline bool lexicographically_smaller(const LossWeights& a, const LossWeights& b) {
    return std::tuple(a.translation, a.contrastive, a.cycle, a.demi_cycle) <
           std::tuple(b.translation, b.contrastive, b.cycle, b.demi_cycle);
}

// Trains one model per grid point (through `run`) and keeps the lowest
// w_tr * L_tr + w_cont * L_cont on the test set.
inline Selection select_coefficients(const std::vector<LossWeights>& grid, const ScoreWeights& score,
                                     const std::function<LossReport(const LossWeights&)>& run) {
    require_config(!grid.empty(), "coefficient selection: empty grid");
    Selection s;
    for (const auto& w : grid) {
        GridResult r{w, run(w), 0.0};
        r.score = score.translation * r.test.translation + score.contrastive * r.test.contrastive;
        s.results.push_back(r);
    }
    const GridResult* best = &s.results.front();
    for (const auto& r : s.results)
        if (r.score < best->score || (r.score == best->score && lexicographically_smaller(r.weights, best->weights)))
            best = &r;
    s.best = best->weights;
    s.best_score = best->score;
    return s;
}

}  // namespace gw::train
