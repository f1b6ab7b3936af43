// gwtool: dataset generation, training, evaluation and experiment grids.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gw/cli/manifest.hpp"
#include "gw/eval/experiments.hpp"

namespace {

using namespace gw;
using namespace gw::eval;
using gw::cli::RunManifest;
using json = nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string assets;
};

json load_config(const Globals& g) {
    if (g.config.empty()) return json::object();
    try {
        json j = json::parse(read_file(g.config));
        require_config(j.is_object(), "config: top level must be an object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + g.config + ": " + e.what());
    }
}

shapes::Assets load_assets(const Globals& g) {
    return g.assets.empty() ? shapes::Assets::load() : shapes::Assets::load(g.assets);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
    for (const auto& [k, v] : j.items())
        require_config(std::find_if(known.begin(), known.end(), [&](const char* n) { return k == n; }) != known.end(),
                       std::string("config section '") + section + "': unknown key '" + k + "'");
}

// "data": {"dir": ..., "k": ..., "test": ..., "seed": ..., "specialist_seed": ...}
struct DataSection {
    std::string dir;
    std::size_t k = 10000, test = 1000;
    std::uint64_t seed = 0, specialist_seed = 0;

    json to_json() const {
        return {{"dir", dir}, {"k", k}, {"test", test}, {"seed", seed}, {"specialist_seed", specialist_seed}};
    }
};

DataSection data_section(const json& cfg) {
    DataSection d;
    const json s = cfg.value("data", json::object());
    check_keys(s, "data", {"dir", "k", "test", "seed", "specialist_seed"});
    d.dir = get_or<std::string>(s, "dir", "");
    d.k = get_or<std::size_t>(s, "k", d.k);
    d.test = get_or<std::size_t>(s, "test", d.test);
    d.seed = get_or<std::uint64_t>(s, "seed", d.seed);
    d.specialist_seed = get_or<std::uint64_t>(s, "specialist_seed", d.specialist_seed);
    return d;
}

std::unique_ptr<ExperimentContext> make_context(const DataSection& d, const Globals& g) {
    shapes::Assets assets = load_assets(g);
    shapes::Dataset ds = d.dir.empty() ? shapes::generate_dataset(d.k, d.test, d.seed, assets)
                                       : shapes::load_dataset(d.dir, assets);
    require_config(ds.test_count >= 2, "data: the test set needs at least two records");
    return std::make_unique<ExperimentContext>(std::move(assets), std::move(ds), d.specialist_seed);
}

json asset_hashes(const ExperimentContext& ctx) {
    return {{"colors", ctx.assets.colors_hash},
            {"grammar", ctx.assets.grammar.source_hash},
            {"specialists", ctx.specialists.hash()},
            {"dataset_config", shapes::config_hash(ctx.dataset.shape, ctx.assets)}};
}

TrainConfig train_section(const json& cfg, const Globals& g) {
    TrainConfig t = TrainConfig::from_json(cfg.value("train", json::object()));
    if (g.seed) t.set_seed(*g.seed);
    return t;
}

std::vector<ModelVariant> variants_of(const json& j, const char* key) {
    std::vector<ModelVariant> out;
    if (!j.contains(key)) return {core::kAllVariants.begin(), core::kAllVariants.end()};
    for (const auto& v : j.at(key)) out.push_back(core::variant_from_name(v.get<std::string>()));
    return out;
}

std::vector<std::uint64_t> seeds_of(const json& j, const Globals& g) {
    if (g.seed) return {*g.seed};
    return get_or<std::vector<std::uint64_t>>(j, "seeds", {0});
}

OooSettings ooo_section(const json& cfg, const Globals& g) {
    OooSettings o;
    const json s = cfg.value("ooo", json::object());
    check_keys(s, "ooo", {"enabled", "n_train", "n_test", "seed", "probe_steps", "probe_batch", "probe_lr"});
    o.enabled = get_or<bool>(s, "enabled", false);
    o.n_train = get_or<std::size_t>(s, "n_train", o.n_train);
    o.n_test = get_or<std::size_t>(s, "n_test", o.n_test);
    o.seed = g.seed ? *g.seed : get_or<std::uint64_t>(s, "seed", 0);
    o.probe.seed = o.seed;
    o.probe.steps = get_or<std::size_t>(s, "probe_steps", o.probe.steps);
    o.probe.batch_size = get_or<std::size_t>(s, "probe_batch", o.probe.batch_size);
    o.probe.learning_rate = get_or<double>(s, "probe_lr", o.probe.learning_rate);
    return o;
}

void finish(RunManifest& m, const fs::path& out) {
    m.write(out);
    std::cout << "wrote " << (out / cli::kManifestName).string() << " (" << m.outputs.size() << " outputs)\n";
}

// ---- commands -------------------------------------------------------------

struct GenDataArgs {
    std::optional<std::size_t> k, test;
    std::string out;
    bool images = false;
};

int cmd_gen_data(const Globals& g, const GenDataArgs& a) {
    const json cfg = load_config(g);
    DataSection d = data_section(cfg);
    if (a.k) d.k = *a.k;
    if (a.test) d.test = *a.test;
    if (g.seed) d.seed = *g.seed;
    const auto assets = load_assets(g);
    json m = shapes::build_dataset(d.k, d.seed, a.out, assets, d.test, a.images);
    std::vector<std::pair<std::string, std::string>> images;
    if (a.images)
        for (const auto& e : fs::directory_iterator(fs::path(a.out) / "img"))
            images.emplace_back("img/" + e.path().filename().string(), hash_file(e.path()));
    std::sort(images.begin(), images.end());
    json imgs = json::object();
    for (const auto& [p, h] : images) imgs[p] = h;
    m["run"] = {{"command", "gen-data"}, {"tool_version", cli::kToolVersion}, {"seed", d.seed}, {"images", imgs}};
    write_file(fs::path(a.out) / "manifest.json", m.dump(2) + "\n");
    std::cout << "wrote " << d.k << " training and " << d.test << " test records to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string out;
    std::optional<std::string> variant, mode;
    std::optional<std::size_t> N, steps;
    std::optional<std::string> M;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    json cfg = load_config(g);
    json& t = cfg["train"];
    if (!t.is_object()) t = json::object();
    if (a.variant) t["variant"] = *a.variant;
    if (a.mode) t["contrastive_mode"] = *a.mode;
    if (a.N) t["N"] = *a.N;
    if (a.steps) t["steps"] = *a.steps;
    if (a.M) t["M"] = *a.M == "all" ? json("all") : json(std::stoull(*a.M));
    // The variant keeps its own terms of the configured weights (all 1 when absent).
    const bool own_weights = t.contains("weights");
    TrainConfig tc = train_section(cfg, g);
    if (!tc.free_weights) tc.weights = variant_weights(tc.variant, own_weights ? tc.weights : LossWeights{1, 1, 1, 1});
    const DataSection d = data_section(cfg);
    const auto ctx = make_context(d, g);
    const fs::path out(a.out);
    const LatentTable tr = ctx->train_table(tc.domains), te = ctx->test_table(tc.domains);
    const DatasetSplit split = split_dataset(ctx->K(), tc.N, tc.M, tc.split_seed);
    const TrainResult r = gw::train::train(tc, split, tr, te, [](const MetricsRow& row) {
        if (row.split == "test")
            std::cout << "step " << row.step << " test tr=" << fmt_double(row.losses.translation)
                      << " cont=" << fmt_double(row.losses.contrastive) << " cy=" << fmt_double(row.losses.cycle)
                      << " dcy=" << fmt_double(row.losses.demi_cycle) << "\n";
    });
    const PropertyReport rep = eval_properties(r.model, te, RunMeta::from_config(tc, ctx->K()));
    r.model.save(out / "model.bin", {{"config", tc.to_json()}, {"report", rep.to_json()}});
    write_file(out / "metrics.csv", metrics_csv(r.history));
    write_file(out / "split.csv", split.to_csv());
    write_file(out / "report.json", rep.to_json().dump(2) + "\n");
    RunManifest m = RunManifest::of("train", {{"data", d.to_json()}, {"train", tc.to_json()}}, asset_hashes(*ctx),
                  {{"split", tc.split_seed}, {"init", tc.init_seed}, {"batch", tc.batch_seed}});
    finish(m, out);
    return 0;
}

struct EvalArgs {
    std::string checkpoint, out;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const json cfg = load_config(g);
    const DataSection d = data_section(cfg);
    const auto ctx = make_context(d, g);
    const std::string before = hash_file(a.checkpoint);
    json extra;
    const core::GwModel model = core::GwModel::load(a.checkpoint, &extra);
    RunMeta meta;
    if (extra.contains("config")) meta = RunMeta::from_config(TrainConfig::from_json(extra["config"]), ctx->K());
    meta.domains = model.domains();
    const PropertyReport rep = eval_properties(model, ctx->test_table(model.domains()), meta);
    if (hash_file(a.checkpoint) != before) throw IoError("checkpoint changed during evaluation", a.checkpoint);
    const fs::path out(a.out);
    write_file(out / "report.json", rep.to_json().dump(2) + "\n");
    RunManifest m = RunManifest::of("eval", {{"data", d.to_json()}, {"checkpoint", a.checkpoint}, {"checkpoint_hash", before}},
                  asset_hashes(*ctx), {{"data", d.seed}});
    finish(m, out);
    std::cout << rep.to_json().dump(2) << "\n";
    return 0;
}

struct GridArgs {
    std::string out;
};

int cmd_ablate(const Globals& g, const GridArgs& a) {
    const json cfg = load_config(g);
    const json grid = cfg.value("grid", json::object());
    check_keys(grid, "grid", {"variants", "N", "seeds", "M"});
    const json sel = cfg.value("select", json::object());
    check_keys(sel, "select", {"enabled", "values"});
    const TrainConfig base = train_section(cfg, g);
    const DataSection d = data_section(cfg);
    const OooSettings ooo = ooo_section(cfg, g);
    const auto variants = variants_of(grid, "variants");
    const auto Ns = get_or<std::vector<std::size_t>>(grid, "N", {base.N});
    const auto seeds = seeds_of(grid, g);
    std::size_t M = kAllRemaining;
    if (grid.contains("M") && !(grid["M"].is_string() && grid["M"] == "all")) M = get_or<std::size_t>(grid, "M", 0);
    const auto ctx = make_context(d, g);
    const fs::path out(a.out);

    auto cells = ablation_cells(variants, Ns, seeds, M);
    if (get_or<bool>(sel, "enabled", false)) {
        const auto values = get_or<std::vector<double>>(sel, "values", {0.1, 1.0, 10.0});
        std::vector<SelectionOutcome> outcomes;
        std::map<std::pair<ModelVariant, std::size_t>, LossWeights> chosen;
        for (ModelVariant v : variants)
            for (std::size_t N : Ns) {
                outcomes.push_back(select_cell_weights(*ctx, base, {v, N, M, seeds.front(), std::nullopt}, values, g.jobs));
                chosen[{v, N}] = outcomes.back().selection.best;
            }
        for (auto& c : cells) c.weights = chosen.at({c.variant, c.N});
        write_file(out / "selection.csv", selection_csv(outcomes));
    }
    const auto results = run_cells(*ctx, base, cells, g.jobs, ooo, out);
    write_file(out / "ablation.csv", ablation_csv(results));
    write_file(out / "metrics.csv", grid_metrics_csv(results));
    RunManifest m = RunManifest::of("ablate", cfg, asset_hashes(*ctx), {{"seeds", seeds}, {"data", d.seed}, {"ooo", ooo.seed}});
    m.config["effective_train"] = base.to_json();
    finish(m, out);
    return 0;
}

int cmd_sweep(const Globals& g, const GridArgs& a) {
    const json cfg = load_config(g);
    const json sw = cfg.value("sweep", json::object());
    check_keys(sw, "sweep", {"variants", "N", "M", "seeds"});
    const TrainConfig base = train_section(cfg, g);
    const DataSection d = data_section(cfg);
    const auto ctx = make_context(d, g);
    const auto variants = variants_of(sw, "variants");
    const auto N = get_or<std::size_t>(sw, "N", base.N);
    std::vector<std::size_t> Ms;
    require_config(sw.contains("M") && sw["M"].is_array(), "sweep: 'M' must be a list");
    for (const auto& m : sw["M"]) Ms.push_back(m.is_string() && m == "all" ? kAllRemaining : m.get<std::size_t>());
    const auto seeds = seeds_of(sw, g);
    const auto cells = sweep_cells(variants, N, Ms, seeds, ctx->K());
    const fs::path out(a.out);
    const auto results = run_cells(*ctx, base, cells, g.jobs, {}, out, true);
    write_file(out / "sweep.csv", sweep_csv(results));
    write_file(out / "metrics.csv", grid_metrics_csv(results));
    RunManifest m = RunManifest::of("sweep", cfg, asset_hashes(*ctx), {{"seeds", seeds}, {"data", d.seed}});
    m.config["effective_train"] = base.to_json();
    finish(m, out);
    return 0;
}

struct OooArgs {
    std::vector<std::string> checkpoints;
    bool baselines = false;
    std::string out;
};

int cmd_ooo(const Globals& g, const OooArgs& a) {
    const json cfg = load_config(g);
    const DataSection d = data_section(cfg);
    OooSettings ooo = ooo_section(cfg, g);
    require_config(!a.checkpoints.empty() || a.baselines, "ooo: give --checkpoint and/or --baselines");
    const auto ctx = make_context(d, g);
    const fs::path out(a.out);
    const auto tr = ctx->protos(ctx->dataset.train()), te = ctx->protos(ctx->dataset.test());
    const OooDataset triplets = build_ooo_dataset(tr, te, ooo.n_train, ooo.n_test, ooo.seed);
    write_file(out / "ooo_triplets.csv", ooo_csv(triplets));
    std::string csv = "source,variant,N,seed,vvv,ttt,ttv,vvv_train\n";
    json hashes = json::object();
    for (const auto& path : a.checkpoints) {
        hashes[path] = hash_file(path);
        json extra;
        const core::GwModel model = core::GwModel::load(path, &extra);
        const auto doms = model.domains();
        const LatentTable ltr = ctx->train_table(doms), lte = ctx->test_table(doms);
        const auto acc = eval_ooo(triplets, encode_items(model, ltr.a, ltr.b), encode_items(model, lte.a, lte.b), ooo.probe);
        std::string variant, N, seed;
        if (extra.contains("config")) {
            const auto c = TrainConfig::from_json(extra["config"]);
            variant = variant_name(c.variant);
            N = std::to_string(c.N);
            seed = std::to_string(c.split_seed);
        }
        csv += fs::path(path).generic_string() + "," + variant + "," + N + "," + seed + "," + fmt_double(acc.vvv) + "," +
               fmt_double(acc.ttt) + "," + fmt_double(acc.ttv) + "," + fmt_double(acc.vvv_train) + "\n";
    }
    if (a.baselines) {
        const TrainConfig base = train_section(cfg, g);
        core::ModelConfig mc;
        mc.domains = base.domains;
        mc.hidden = base.hidden;
        mc.seed = ooo.seed;
        const auto v = static_cast<std::size_t>(base.domains[0]), l = static_cast<std::size_t>(base.domains[1]);
        const auto b = run_ooo_baselines(triplets, ctx->train_latents[v], ctx->test_latents[v], ctx->train_latents[l],
                                         ctx->test_latents[l], mc, ooo.probe);
        csv += "baseline_end_to_end,,,," + fmt_double(b.end_to_end) + ",,,\n";
        csv += "baseline_no_encoder,,,," + fmt_double(b.no_encoder) + ",,,\n";
        csv += "baseline_random_encoder,,,," + fmt_double(b.random_encoder.vvv) + "," +
               fmt_double(b.random_encoder.ttt) + "," + fmt_double(b.random_encoder.ttv) + "," +
               fmt_double(b.random_encoder.vvv_train) + "\n";
    }
    write_file(out / "ooo.csv", csv);
    RunManifest m = RunManifest::of("ooo", cfg, asset_hashes(*ctx), {{"ooo", ooo.seed}, {"data", d.seed}});
    m.config["checkpoints"] = hashes;
    finish(m, out);
    return 0;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string out;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw IoError("missing column " + name, "csv");
        return static_cast<std::size_t>(it - header.begin());
    }
};

CsvTable read_csv(const fs::path& p) {
    const auto lines = read_lines(p);
    if (lines.empty()) throw IoError("empty csv", p.string());
    CsvTable t{split(lines[0], ','), {}};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cells = split(lines[i], ',');
        if (cells.size() != t.header.size()) throw IoError("ragged csv row " + std::to_string(i), p.string());
        t.rows.push_back(std::move(cells));
    }
    return t;
}

// One file per figure panel: x (N or M), series (variant), seed, value; one
// row per completed grid cell.
std::size_t emit_figures(const CsvTable& t, const std::string& x, const std::string& prefix,
                         const std::vector<std::pair<std::string, std::string>>& panels, const fs::path& out,
                         std::vector<std::string>& written) {
    std::size_t rows = 0;
    for (const auto& [column, name] : panels) {
        if (std::find(t.header.begin(), t.header.end(), column) == t.header.end()) continue;
        std::string csv = "x,series,seed,value\n";
        std::size_t n = 0;
        for (const auto& r : t.rows) {
            if (r[t.column(column)].empty()) continue;
            csv += r[t.column(x)] + "," + r[t.column("variant")] + "," + r[t.column("seed")] + "," + r[t.column(column)] + "\n";
            ++n;
        }
        if (n == 0) continue;
        rows = std::max(rows, n);
        const std::string file = prefix + name + ".csv";
        write_file(out / file, csv);
        written.push_back(file);
    }
    return rows;
}

int cmd_report(const Globals&, const ReportArgs& a) {
    const fs::path out(a.out);
    std::vector<std::string> written;
    json sources = json::array();
    std::size_t cells = 0;
    for (const auto& in : a.inputs) {
        const RunManifest m = RunManifest::open(in);
        sources.push_back({{"dir", in}, {"command", m.command}, {"config_hash", m.config_hash()}});
        const std::vector<std::pair<std::string, std::string>> loss_panels = {
            {"loss_tr", "translation"}, {"loss_cont", "contrastive"}, {"loss_cy", "cycle"}, {"loss_dcy", "demi_cycle"}};
        if (m.lists("ablation.csv")) {
            const CsvTable t = read_csv(fs::path(in) / "ablation.csv");
            auto panels = loss_panels;
            panels.insert(panels.end(), {{"ooo_vvv", "ooo_vvv"}, {"ooo_ttt", "ooo_ttt"}, {"ooo_ttv", "ooo_ttv"}});
            emit_figures(t, "N", "fig_ablation_", panels, out, written);
            cells += t.rows.size();
        }
        if (m.lists("sweep.csv")) {
            const CsvTable t = read_csv(fs::path(in) / "sweep.csv");
            emit_figures(t, "M", "fig_unpaired_", loss_panels, out, written);
            cells += t.rows.size();
        }
    }
    require_config(!written.empty(), "report: no ablation.csv or sweep.csv among the inputs");
    RunManifest m = RunManifest::of("report", {{"inputs", sources}}, json::object(), json::object());
    finish(m, out);
    std::cout << "report: " << cells << " grid cells, " << written.size() << " figure files\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised global workspace experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "run.json configuration (flags override it)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "override every seed of the command");
    app.add_option("--jobs", g.jobs, "independent runs executed in parallel")->check(CLI::PositiveNumber);
    app.add_option("--assets", g.assets, "directory holding colors.tsv and grammar.json")->check(CLI::ExistingDirectory);

    GenDataArgs gen;
    auto* c_gen = app.add_subcommand("gen-data", "generate a dataset directory");
    c_gen->add_option("--k", gen.k, "training records");
    c_gen->add_option("--test", gen.test, "held-out records appended after the training ones");
    c_gen->add_option("--out", gen.out, "output directory")->required();
    c_gen->add_flag("--images", gen.images, "also write PPM images");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "train one model");
    c_train->add_option("--out", tr.out, "output directory")->required();
    c_train->add_option("--variant", tr.variant, "model variant");
    c_train->add_option("--mode", tr.mode, "contrastive mode: literal or infonce");
    c_train->add_option("--n", tr.N, "paired examples N");
    c_train->add_option("--m", tr.M, "strictly unpaired examples M, or 'all'");
    c_train->add_option("--steps", tr.steps, "optimizer steps");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
    c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--out", ev.out, "output directory")->required();

    GridArgs ab;
    auto* c_ablate = app.add_subcommand("ablate", "train and evaluate the variant x N x seed grid");
    c_ablate->add_option("--out", ab.out, "output directory")->required();

    OooArgs oo;
    auto* c_ooo = app.add_subcommand("ooo", "odd-one-out probes on checkpoints and baselines");
    c_ooo->add_option("--checkpoint", oo.checkpoints, "checkpoint file (repeatable)")->check(CLI::ExistingFile);
    c_ooo->add_flag("--baselines", oo.baselines, "also run the three baselines");
    c_ooo->add_option("--out", oo.out, "output directory")->required();

    GridArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "train across unpaired-pool sizes M");
    c_sweep->add_option("--out", sw.out, "output directory")->required();

    ReportArgs rp;
    auto* c_report = app.add_subcommand("report", "aggregate grid CSVs into per-figure series");
    c_report->add_option("--in", rp.inputs, "ablate or sweep output directory (repeatable)")->required();
    c_report->add_option("--out", rp.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_gen) return cmd_gen_data(g, gen);
        if (*c_train) return cmd_train(g, tr);
        if (*c_eval) return cmd_eval(g, ev);
        if (*c_ablate) return cmd_ablate(g, ab);
        if (*c_ooo) return cmd_ooo(g, oo);
        if (*c_sweep) return cmd_sweep(g, sw);
        if (*c_report) return cmd_report(g, rp);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
