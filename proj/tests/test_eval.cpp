#include <cmath>
#include <filesystem>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "gw/eval/experiments.hpp"
#include "support/ooo_oracle.hpp"

using namespace gw;
using namespace gw::eval;

namespace {

const shapes::Assets& assets() {
    static const shapes::Assets a = shapes::Assets::load();
    return a;
}

std::vector<ProtoVector> protos(std::size_t n, std::uint64_t seed) {
    const auto d = shapes::generate_dataset(n, 0, seed, assets());
    std::vector<ProtoVector> out;
    for (const auto& r : d.records) out.push_back(r.proto);
    return out;
}

const ExperimentContext& small_context() {
    static const ExperimentContext ctx(assets(), shapes::generate_dataset(200, 60, 4, assets()), 4);
    return ctx;
}

TrainConfig tiny_base() {
    TrainConfig c;
    c.domains = {Domain::vision, Domain::proto};
    c.weights = {1.0, 0.5, 0.5, 0.5};
    c.batch_size = 16;
    c.steps = 20;
    c.eval_every = 10;
    c.hidden = 16;
    return c;
}

}  // namespace

TEST_CASE("attribute distances") {
    const auto p = protos(2, 1);
    ProtoVector a = p[0], b = p[0];
    for (std::size_t k = 0; k < kOooAttributes; ++k) CHECK(attribute_distance(a, b, static_cast<OooAttribute>(k)) == 0.0);
    b[3] += 0.3;
    b[4] -= 0.4;
    CHECK(attribute_distance(a, b, OooAttribute::location) == Catch::Approx(0.5));
    CHECK(attribute_distance(a, b, OooAttribute::size) == 0.0);
    CHECK(item_distance(a, b) == 0.0);
    std::rotate(b.begin(), b.begin() + 1, b.begin() + 3);
    CHECK(attribute_distance(a, b, OooAttribute::shape) == 2.0);
    CHECK(ooo_attribute_name(OooAttribute::orientation) == "orientation");
}

TEST_CASE("triplets satisfy their invariants") {
    const auto items = protos(300, 2);
    const auto ts = build_ooo_triplets(items, 10000, default_far_pool(items.size()), 3);
    REQUIRE(ts.size() == 10000);
    std::array<std::size_t, 3> positions{};
    std::array<std::size_t, kOooAttributes> attrs{};
    for (const auto& t : ts) {
        REQUIRE(t.negative != t.ref);
        REQUIRE(t.negative != t.positive);
        REQUIRE(t.positive != t.ref);
        double best = 1e300;
        for (std::size_t j = 0; j < items.size(); ++j)
            if (j != t.ref) best = std::min(best, attribute_distance(items[t.ref], items[j], t.common));
        REQUIRE(attribute_distance(items[t.ref], items[t.positive], t.common) == best);
        const auto s = t.slots();
        REQUIRE(s[t.odd_position] == t.negative);
        ++positions[t.odd_position];
        ++attrs[static_cast<std::size_t>(t.common)];
    }
    for (auto c : positions) CHECK(std::abs(static_cast<double>(c) / 10000.0 - 1.0 / 3.0) < 0.02);
    for (auto c : attrs) CHECK(c > 1800);
    CHECK(default_far_pool(10000) == 50);
    CHECK(default_far_pool(200000) == 200);
    CHECK_THROWS_AS(build_ooo_triplets(std::span(items).first(50), 1, 50, 0), ConfigError);
}

TEST_CASE("negative selection matches the exhaustive definition") {
    const shapes::ShapeConfig cfg;
    const auto d = shapes::generate_dataset(20, 0, 77, assets());
    std::vector<ProtoVector> items;
    std::vector<gw::testing::OracleItem> oracle;
    for (const auto& r : d.records) {
        items.push_back(r.proto);
        oracle.push_back(gw::testing::oracle_item(r.attributes, cfg));
    }
    const auto ts = build_ooo_triplets(items, 1000, 5, 8);
    for (const auto& t : ts) {
        const auto pos = gw::testing::oracle_positives(oracle, t.ref, static_cast<int>(t.common));
        REQUIRE(std::find(pos.begin(), pos.end(), t.positive) != pos.end());
        const auto far = gw::testing::oracle_far_pool(oracle, t.ref, t.positive, 5);
        REQUIRE(far == negative_pool(items, t.ref, t.positive, 5));
        REQUIRE(std::find(far.begin(), far.end(), t.negative) != far.end());
    }
}

TEST_CASE("odd-one-out dataset sizes and determinism") {
    const auto tr = protos(400, 5), te = protos(120, 6);
    const auto a = build_ooo_dataset(tr, te, 250, 40, 9), b = build_ooo_dataset(tr, te, 250, 40, 9);
    CHECK(a.train.size() == 250);
    CHECK(a.test.size() == 40);
    CHECK(ooo_csv(a) == ooo_csv(b));
    CHECK(ooo_csv(a).rfind("split,ref,pos,neg,common_attribute,odd_position\n", 0) == 0);
    CHECK(ooo_csv(build_ooo_dataset(tr, te, 250, 40, 10)) != ooo_csv(a));
}

TEST_CASE("ttv vision position is uniform") {
    const auto slots = ttv_vision_slots(10000, 3);
    std::array<std::size_t, 3> counts{};
    for (auto s : slots) ++counts[s];
    CHECK(chi_square_p_2dof(chi_square_uniform(counts)) > 0.01);
    CHECK(chi_square_uniform(std::array<std::size_t, 3>{10, 10, 10}) == 0.0);
    CHECK(chi_square_p_2dof(chi_square_uniform(std::array<std::size_t, 3>{100, 0, 0})) < 1e-10);
}

TEST_CASE("triplet inputs place latents by mode") {
    const auto items = protos(60, 1);
    const auto ts = build_ooo_triplets(items, 30, 5, 2);
    EncodedItems e{Matrix(60, 2), Matrix(60, 2)};
    for (std::size_t i = 0; i < 60; ++i) {
        e.vision(i, 0) = static_cast<double>(i);
        e.vision(i, 1) = 1.0;
        e.language(i, 0) = static_cast<double>(i);
        e.language(i, 1) = -1.0;
    }
    const Matrix v = triplet_inputs(ts, e, OooMode::vvv), t = triplet_inputs(ts, e, OooMode::ttt),
                 x = triplet_inputs(ts, e, OooMode::ttv, 4);
    const auto vs = ttv_vision_slots(ts.size(), 4);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto s = ts[i].slots();
        for (std::size_t p = 0; p < 3; ++p) {
            CHECK(v(i, 2 * p) == static_cast<double>(s[p]));
            CHECK(v(i, 2 * p + 1) == 1.0);
            CHECK(t(i, 2 * p + 1) == -1.0);
            CHECK(x(i, 2 * p + 1) == (vs[i] == p ? 1.0 : -1.0));
        }
    }
}

TEST_CASE("probe chance floors") {
    Rng rng(1);
    Matrix x(3000, 36);
    for (double& v : x.values()) v = normal(rng);
    std::vector<std::size_t> y(3000);
    for (auto& l : y) l = uniform_index(rng, 3);
    const std::span<const std::size_t> ytr(y.data(), 2000), yte(y.data() + 2000, 1000);
    std::vector<std::size_t> rows_tr(2000), rows_te(1000);
    std::iota(rows_tr.begin(), rows_tr.end(), 0);
    std::iota(rows_te.begin(), rows_te.end(), 2000);
    const Matrix xtr = x.gather_rows(rows_tr), xte = x.gather_rows(rows_te);

    ProbeConfig c;
    c.steps = 2000;
    CHECK(std::abs(accuracy(make_probe(36, c).apply(xte), yte) - 1.0 / 3.0) < 0.05);
    const Mlp p = train_probe(xtr, ytr, c);
    CHECK(std::abs(accuracy(p.apply(xte), yte) - 1.0 / 3.0) < 0.05);
    const Mlp again = train_probe(xtr, ytr, c);
    CHECK(p.apply(xte) == again.apply(xte));
    CHECK(p.parameter_count() == 36 * 16 + 16 + 16 * 3 + 3);
}

TEST_CASE("odd-one-out on proto latents is learnable and train accuracy bounds test") {
    const auto tr = protos(2000, 11), te = protos(400, 12);
    const auto d = build_ooo_dataset(tr, te, 300, 400, 13);
    auto as_matrix = [](const std::vector<ProtoVector>& ps) {
        Matrix m(ps.size(), 11);
        for (std::size_t i = 0; i < ps.size(); ++i)
            for (std::size_t k = 0; k < 11; ++k) m(i, k) = ps[i][k];
        return m;
    };
    const EncodedItems etr{as_matrix(tr), as_matrix(tr)}, ete{as_matrix(te), as_matrix(te)};
    ProbeConfig c;
    c.steps = 3000;
    const auto a = eval_ooo(d, etr, ete, c);
    CHECK(a.vvv > 0.40);
    CHECK(a.vvv_train >= a.vvv);
    CHECK(a.ttt == a.vvv);
    CHECK(a.ttv == a.vvv);
}

TEST_CASE("baseline accounting") {
    const auto& ctx = small_context();
    const auto d = build_ooo_dataset(ctx.protos(ctx.dataset.train()), ctx.protos(ctx.dataset.test()), 100, 40, 1, 5);
    core::ModelConfig mc;
    mc.domains = {Domain::vision, Domain::proto};
    mc.hidden = 16;
    ProbeConfig c;
    c.steps = 50;
    const auto v = static_cast<std::size_t>(Domain::vision), p = static_cast<std::size_t>(Domain::proto);
    const auto b = run_ooo_baselines(d, ctx.train_latents[v], ctx.test_latents[v], ctx.train_latents[p],
                                     ctx.test_latents[p], mc, c);
    CHECK(b.end_to_end_parameters > b.probe_parameters);
    CHECK(b.probe_parameters == 36 * 16 + 16 + 51);
    for (double acc : {b.end_to_end, b.no_encoder, b.random_encoder.vvv, b.random_encoder.ttt, b.random_encoder.ttv})
        CHECK((acc >= 0.0 && acc <= 1.0));
}

TEST_CASE("property report") {
    const auto& ctx = small_context();
    const LatentTable te = ctx.test_table({Domain::vision, Domain::proto});
    core::ModelConfig mc;
    mc.domains = {Domain::vision, Domain::proto};
    mc.hidden = 16;
    const core::GwModel m(mc);
    RunMeta meta;
    meta.N = 7;
    const auto r = eval_properties(m, te, meta);
    CHECK(r.translation == Catch::Approx(0.5 * (r.tr_a_to_b + r.tr_b_to_a)).epsilon(1e-14));
    CHECK(r.meta.N == 7);
    CHECK(r.to_json() == eval_properties(m, te, meta).to_json());
    CHECK(r.to_json()["meta"]["variant"] == "translation_only");

    core::GwModel id(core::ModelConfig{{Domain::vision, Domain::text}, 12, 24, 3, 0});
    core::set_identity(id);
    LatentTable same{te.a, te.a};
    const auto f = eval_properties(id, same, meta);
    CHECK(f.translation < 1e-20);
    CHECK(f.cycle < 1e-20);
    CHECK(f.demi_cycle < 1e-20);
}

TEST_CASE("ablation grid and sweep") {
    const auto& ctx = small_context();
    const auto dir = std::filesystem::temp_directory_path() / "gw_test_ablation";
    std::filesystem::remove_all(dir);
    const auto cells = ablation_cells({core::kAllVariants.begin(), core::kAllVariants.end()}, {20, 40}, {0, 1});
    REQUIRE(cells.size() == 20);
    const auto rs = run_cells(ctx, tiny_base(), cells, 2, {}, dir);
    REQUIRE(rs.size() == 20);
    const std::string csv = ablation_csv(rs);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
    for (const auto& r : rs) {
        CHECK(std::filesystem::exists(checkpoint_path(dir, r.cell)));
        r.report.meta.weights.check_variant(r.report.meta.variant);
        CHECK(r.report.meta.M == 200 - r.cell.N);
    }
    // Same (N, seed) gives the same split whatever the variant.
    CHECK(rs[0].split.to_csv() == rs[4].split.to_csv());
    CHECK(rs[0].split.to_csv() != rs[1].split.to_csv());

    const auto serial = run_cells(ctx, tiny_base(), cells, 1);
    CHECK(ablation_csv(serial) == csv);

    const std::vector<std::uint64_t> seeds{0, 1};
    const auto sc = sweep_cells({ModelVariant::translation_only, ModelVariant::all_sup_all_cycles}, 20,
                                {0, 60, kAllRemaining}, seeds, ctx.K());
    REQUIRE(sc.size() == 12);
    const auto sw = run_cells(ctx, tiny_base(), sc, 1, {}, dir / "sweep", true);
    CHECK(std::filesystem::exists(dir / "sweep" / "M60" / "ckpt" / "all_sup_all_cycles" / "20" / "1.bin"));
    // Supervised runs never look at the unpaired pool.
    CHECK(sw[0].report.translation == sw[2].report.translation);
    CHECK(sw[0].report.translation == sw[4].report.translation);
    // The largest M reproduces the ablation cell exactly.
    CHECK(sw[10].report.to_json() == rs[16].report.to_json());
    CHECK(sw[10].cell.seed == rs[16].cell.seed);
    CHECK(sw[10].cell.N == rs[16].cell.N);
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation leaves checkpoints untouched") {
    const auto& ctx = small_context();
    const auto path = std::filesystem::temp_directory_path() / "gw_test_eval.bin";
    core::ModelConfig mc;
    mc.domains = {Domain::vision, Domain::proto};
    mc.hidden = 16;
    core::GwModel(mc).save(path);
    const auto before = hash_file(path);
    const auto m = core::GwModel::load(path);
    eval_properties(m, ctx.test_table(mc.domains), {});
    CHECK(hash_file(path) == before);
    std::filesystem::remove(path);
}
