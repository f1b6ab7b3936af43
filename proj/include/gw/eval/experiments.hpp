#pragma once

// Grids of training runs: the ablation matrix over variants, N and seeds, and
// the unpaired-data sweep over M. Cells are independent and may run in
// parallel; results come back in grid order whatever the job count.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "gw/eval/ooo.hpp"
#include "gw/eval/properties.hpp"
#include "gw/shapes/dataset.hpp"

namespace gw::eval {

namespace fs = std::filesystem;

// Data, frozen specialists and their latents for every domain.
struct ExperimentContext {
    shapes::Assets assets;
    shapes::Dataset dataset;
    specialists::Specialists specialists;
    std::array<Matrix, 3> train_latents, test_latents;  // indexed by Domain

    ExperimentContext(shapes::Assets a, shapes::Dataset d, std::uint64_t specialist_seed)
        : assets(std::move(a)), dataset(std::move(d)), specialists(specialist_seed, assets) {
        for (Domain dom : {Domain::vision, Domain::proto, Domain::text}) {
            const auto k = static_cast<std::size_t>(dom);
            train_latents[k] = specialists.embed(dom, dataset.train());
            test_latents[k] = specialists.embed(dom, dataset.test());
        }
    }

    std::size_t K() const { return dataset.train_count; }

    LatentTable train_table(std::array<Domain, 2> d) const {
        return {train_latents[static_cast<std::size_t>(d[0])], train_latents[static_cast<std::size_t>(d[1])]};
    }
    LatentTable test_table(std::array<Domain, 2> d) const {
        return {test_latents[static_cast<std::size_t>(d[0])], test_latents[static_cast<std::size_t>(d[1])]};
    }

    std::vector<ProtoVector> protos(std::span<const shapes::Record> rs) const {
        std::vector<ProtoVector> out;
        out.reserve(rs.size());
        for (const auto& r : rs) out.push_back(r.proto);
        return out;
    }
};

struct OooSettings {
    bool enabled = false;
    std::size_t n_train = 10000, n_test = 1000;
    std::uint64_t seed = 0;
    ProbeConfig probe;
};

struct Cell {
    ModelVariant variant = ModelVariant::translation_only;
    std::size_t N = 0;
    std::size_t M = kAllRemaining;
    std::uint64_t seed = 0;
    std::optional<LossWeights> weights;  // replaces the base coefficients when set
};

struct CellResult {
    Cell cell;
    PropertyReport report;
    std::optional<OooAccuracy> ooo;
    std::vector<MetricsRow> history;
    DatasetSplit split;
};

// `base` carries the shared settings and the full coefficient vector; each
// cell keeps only the coefficients its variant uses and one seed for all three
// streams.
inline TrainConfig cell_config(const TrainConfig& base, const Cell& c) {
    TrainConfig t = base;
    t.variant = c.variant;
    t.weights = c.weights ? *c.weights : variant_weights(c.variant, base.weights);
    t.N = c.N;
    t.M = c.M;
    t.set_seed(c.seed);
    return t;
}

inline fs::path checkpoint_path(const fs::path& root, const Cell& c) {
    return root / "ckpt" / std::string(variant_name(c.variant)) / std::to_string(c.N) / (std::to_string(c.seed) + ".bin");
}

inline fs::path cell_metrics_path(const fs::path& root, const Cell& c) {
    return root / "metrics" / std::string(variant_name(c.variant)) / std::to_string(c.N) / (std::to_string(c.seed) + ".csv");
}

inline fs::path split_path(const fs::path& root, const Cell& c, std::size_t K) {
    const std::size_t M = c.M == kAllRemaining ? K - c.N : c.M;
    return root / "splits" / ("N" + std::to_string(c.N) + "_M" + std::to_string(M) + "_seed" + std::to_string(c.seed) + ".csv");
}

inline CellResult run_cell(const ExperimentContext& ctx, const TrainConfig& base, const Cell& c,
                           const OooSettings& ooo = {}, const OooDataset* triplets = nullptr,
                           std::optional<fs::path> out = std::nullopt) {
    const TrainConfig cfg = cell_config(base, c);
    const LatentTable tr = ctx.train_table(cfg.domains), te = ctx.test_table(cfg.domains);
    CellResult r;
    r.cell = c;
    r.split = split_dataset(ctx.K(), cfg.N, cfg.M, cfg.split_seed);
    const TrainResult t = gw::train::train(cfg, r.split, tr, te);
    r.history = t.history;
    r.report = eval_properties(t.model, te, RunMeta::from_config(cfg, ctx.K()));
    if (ooo.enabled) {
        require(triplets != nullptr, "run_cell: odd-one-out triplets missing");
        r.ooo = eval_ooo(*triplets, encode_items(t.model, tr.a, tr.b), encode_items(t.model, te.a, te.b), ooo.probe);
    }
    if (out) {
        nlohmann::json extra = {{"config", cfg.to_json()}, {"report", r.report.to_json()}};
        t.model.save(checkpoint_path(*out, c), extra);
        write_file(cell_metrics_path(*out, c), metrics_csv(r.history));
        write_file(split_path(*out, c, ctx.K()), r.split.to_csv());
    }
    return r;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first exception is
// rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline std::vector<CellResult> run_cells(const ExperimentContext& ctx, const TrainConfig& base,
                                         const std::vector<Cell>& cells, std::size_t jobs, const OooSettings& ooo = {},
                                         std::optional<fs::path> out = std::nullopt, bool dir_per_m = false) {
    std::optional<OooDataset> triplets;
    if (ooo.enabled) {
        const auto tr = ctx.protos(ctx.dataset.train()), te = ctx.protos(ctx.dataset.test());
        triplets = build_ooo_dataset(tr, te, ooo.n_train, ooo.n_test, ooo.seed);
        if (out) write_file(*out / "ooo_triplets.csv", ooo_csv(*triplets));
    }
    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
        std::optional<fs::path> root = out;
        if (out && dir_per_m) {
            const std::size_t M = cells[i].M == kAllRemaining ? ctx.K() - cells[i].N : cells[i].M;
            root = *out / ("M" + std::to_string(M));
        }
        results[i] = run_cell(ctx, base, cells[i], ooo, triplets ? &*triplets : nullptr, root);
    });
    return results;
}

struct SelectionOutcome {
    Cell cell;
    ScoreWeights score;
    double calibration_translation = 0, calibration_contrastive = 0;
    Selection selection;
};

// Coefficient selection for one (variant, N, seed): a translation-only and a
// contrastive-only run fix the score weights, then every grid point is trained.
inline SelectionOutcome select_cell_weights(const ExperimentContext& ctx, const TrainConfig& base, const Cell& c,
                                            const std::vector<double>& values, std::size_t jobs) {
    const LatentTable tr = ctx.train_table(base.domains), te = ctx.test_table(base.domains);
    const DatasetSplit split = split_dataset(ctx.K(), c.N, c.M, c.seed);
    const auto grid = coefficient_grid(c.variant, values);
    std::vector<TrainConfig> runs;
    TrainConfig only_tr = cell_config(base, {ModelVariant::translation_only, c.N, c.M, c.seed, std::nullopt});
    TrainConfig only_cont = cell_config(base, {ModelVariant::trans_cont, c.N, c.M, c.seed, std::nullopt});
    only_cont.weights = {0.0, 1.0, 0.0, 0.0};
    only_cont.free_weights = true;
    runs.push_back(only_tr);
    runs.push_back(only_cont);
    for (const auto& w : grid) {
        TrainConfig t = cell_config(base, c);
        t.weights = w;
        runs.push_back(t);
    }
    std::vector<LossReport> finals(runs.size());
    parallel_for(runs.size(), jobs, [&](std::size_t i) { finals[i] = gw::train::train(runs[i], split, tr, te).final_test; });
    SelectionOutcome out;
    out.cell = c;
    out.calibration_translation = finals[0].translation;
    out.calibration_contrastive = finals[1].contrastive;
    out.score = calibrate_score_weights(out.calibration_translation, out.calibration_contrastive);
    std::size_t next = 2;
    out.selection = select_coefficients(grid, out.score, [&](const LossWeights&) { return finals[next++]; });
    return out;
}

inline std::string selection_csv(const std::vector<SelectionOutcome>& s) {
    std::string out = "variant,N,seed,score_w_tr,score_w_cont,score_fallback,alpha_tr,alpha_cont,alpha_cy,alpha_dcy,"
                      "loss_tr,loss_cont,score,selected\n";
    for (const auto& o : s)
        for (const auto& r : o.selection.results)
            out += std::string(variant_name(o.cell.variant)) + "," + std::to_string(o.cell.N) + "," +
                   std::to_string(o.cell.seed) + "," + fmt_double(o.score.translation) + "," +
                   fmt_double(o.score.contrastive) + "," + (o.score.fallback ? "1" : "0") + "," +
                   fmt_double(r.weights.translation) + "," + fmt_double(r.weights.contrastive) + "," +
                   fmt_double(r.weights.cycle) + "," + fmt_double(r.weights.demi_cycle) + "," +
                   fmt_double(r.test.translation) + "," + fmt_double(r.test.contrastive) + "," + fmt_double(r.score) +
                   "," + (r.weights == o.selection.best ? "1" : "0") + "\n";
    return out;
}

inline std::vector<Cell> ablation_cells(const std::vector<ModelVariant>& variants, const std::vector<std::size_t>& Ns,
                                        const std::vector<std::uint64_t>& seeds, std::size_t M = kAllRemaining) {
    std::vector<Cell> out;
    for (ModelVariant v : variants)
        for (std::size_t N : Ns)
            for (std::uint64_t s : seeds) out.push_back({v, N, M, s, std::nullopt});
    return out;
}

// Unpaired-pool sizes are checked to nest before anything is trained.
inline std::vector<Cell> sweep_cells(const std::vector<ModelVariant>& variants, std::size_t N,
                                     std::vector<std::size_t> Ms, const std::vector<std::uint64_t>& seeds, std::size_t K) {
    require_config(!Ms.empty(), "sweep: empty M list");
    for (std::size_t& m : Ms) m = m == kAllRemaining ? K - N : m;
    std::sort(Ms.begin(), Ms.end());
    Ms.erase(std::unique(Ms.begin(), Ms.end()), Ms.end());
    for (std::uint64_t s : seeds)
        for (std::size_t i = 1; i < Ms.size(); ++i) {
            const auto small = split_dataset(K, N, Ms[i - 1], s), big = split_dataset(K, N, Ms[i], s);
            require(std::equal(small.unpaired.begin(), small.unpaired.end(), big.unpaired.begin()),
                    "sweep: unpaired pools do not nest");
        }
    std::vector<Cell> out;
    for (ModelVariant v : variants)
        for (std::size_t m : Ms)
            for (std::uint64_t s : seeds) out.push_back({v, N, m, s, std::nullopt});
    return out;
}

inline std::string ablation_csv(const std::vector<CellResult>& rs) {
    std::string out =
        "variant,N,M,seed,alpha_tr,alpha_cont,alpha_cy,alpha_dcy,contrastive_mode,loss_tr,loss_cont,loss_cy,loss_dcy,"
        "loss_cont_literal,loss_cont_infonce,ooo_vvv,ooo_ttt,ooo_ttv\n";
    for (const auto& r : rs) {
        const auto& m = r.report.meta;
        auto f = [](double v) { return fmt_double(v); };
        out += std::string(variant_name(m.variant)) + "," + std::to_string(m.N) + "," + std::to_string(m.M) + "," +
               std::to_string(m.split_seed) + "," + f(m.weights.translation) + "," + f(m.weights.contrastive) + "," +
               f(m.weights.cycle) + "," + f(m.weights.demi_cycle) + "," + std::string(contrastive_mode_name(m.mode)) +
               "," + f(r.report.translation) + "," + f(r.report.contrastive(m.mode)) + "," + f(r.report.cycle) + "," +
               f(r.report.demi_cycle) + "," + f(r.report.contrastive_literal) + "," + f(r.report.contrastive_infonce);
        if (r.ooo)
            out += "," + f(r.ooo->vvv) + "," + f(r.ooo->ttt) + "," + f(r.ooo->ttv) + "\n";
        else
            out += ",,,\n";
    }
    return out;
}

inline std::string sweep_csv(const std::vector<CellResult>& rs) {
    std::string out = "variant,N,M,seed,loss_tr,loss_cont,loss_cy,loss_dcy\n";
    for (const auto& r : rs) {
        const auto& m = r.report.meta;
        out += std::string(variant_name(m.variant)) + "," + std::to_string(m.N) + "," + std::to_string(m.M) + "," +
               std::to_string(m.split_seed) + "," + fmt_double(r.report.translation) + "," +
               fmt_double(r.report.contrastive(m.mode)) + "," + fmt_double(r.report.cycle) + "," +
               fmt_double(r.report.demi_cycle) + "\n";
    }
    return out;
}

// Every cell's metric history, tagged by cell.
inline std::string grid_metrics_csv(const std::vector<CellResult>& rs) {
    std::string out = "variant,N,M,seed,step,split,loss_tr,loss_cont,loss_cy,loss_dcy,loss_total\n";
    for (const auto& r : rs) {
        const auto& m = r.report.meta;
        const std::string tag = std::string(variant_name(m.variant)) + "," + std::to_string(m.N) + "," +
                                std::to_string(m.M) + "," + std::to_string(m.split_seed) + ",";
        const std::string body = metrics_csv(r.history);
        for (const auto& line : split(body.substr(body.find('\n') + 1), '\n'))
            if (!line.empty()) out += tag + line + "\n";
    }
    return out;
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace gw::eval
