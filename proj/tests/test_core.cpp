#include <cmath>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "gw/core/losses.hpp"
#include "support/finite_diff.hpp"

using namespace gw;
using namespace gw::core;
using specialists::Domain;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.values()) v = uniform(rng, -scale, scale);
    return m;
}

// Vision latent = proto vector padded with a zero, so identity maps translate exactly.
PairedBatch proto_fixture(std::size_t n, Rng& rng) {
    PairedBatch b{Matrix(n, 12), Matrix(n, 11)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cat = uniform_index(rng, 3);
        for (std::size_t k = 0; k < 3; ++k) b.b(i, k) = k == cat ? 1.0 : -1.0;
        for (std::size_t k = 3; k < 11; ++k) b.b(i, k) = uniform(rng, -1, 1);
        for (std::size_t k = 0; k < 11; ++k) b.a(i, k) = b.b(i, k);
    }
    return b;
}

double value(const std::function<Var(Graph&)>& f) {
    Graph g(false);
    return g.scalar(f(g));
}

ModelConfig small_config(std::array<Domain, 2> domains = {Domain::vision, Domain::text}) {
    ModelConfig c;
    c.domains = domains;
    c.hidden = 8;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("model shapes") {
    const GwModel m;
    for (Domain d : m.domains()) {
        CHECK(m.encoder(d).out_width() == 12);
        CHECK(m.decoder(d).in_width() == 12);
        CHECK(m.encoder(d).layers() == 4);
        CHECK(m.decoder(d).layers() == 4);
        CHECK(m.encoder(d).weight(1).value.rows() == 256);
    }
    CHECK(m.encoder(Domain::vision).in_width() == 12);
    ModelConfig c;
    c.domains = {Domain::vision, Domain::proto};
    const GwModel mp(c);
    CHECK(mp.encoder(Domain::proto).in_width() == 11);
    CHECK(mp.decoder(Domain::proto).out_width() == 11);
    CHECK_THROWS_AS(m.encoder(Domain::proto), ContractViolation);
    for (Domain d : m.domains())
        for (const Mlp* net : {&m.encoder(d), &m.decoder(d)})
            for (std::size_t l = 0; l < net->layers(); ++l) {
                const double bound = 1.0 / std::sqrt(static_cast<double>(net->weight(l).value.cols()));
                for (double v : net->weight(l).value.values()) REQUIRE(std::abs(v) <= bound);
                for (double v : net->bias(l).value.values()) REQUIRE(std::abs(v) <= bound);
            }
}

TEST_CASE("variants and weights") {
    CHECK(has_gw(ModelVariant::trans_cont));
    CHECK(has_gw(ModelVariant::trans_demi_cycles));
    CHECK(has_gw(ModelVariant::all_sup_all_cycles));
    CHECK_FALSE(has_gw(ModelVariant::translation_only));
    CHECK_FALSE(has_gw(ModelVariant::trans_full_cycles));
    const LossWeights all{1.0, 0.5, 0.2, 0.3};
    for (ModelVariant v : kAllVariants) {
        CHECK_NOTHROW(variant_weights(v, all).check_variant(v));
        CHECK(variant_from_name(variant_name(v)) == v);
    }
    CHECK_THROWS_AS(all.check_variant(ModelVariant::trans_cont), ConfigError);
    CHECK_THROWS_AS((LossWeights{1.0, -0.1, 0, 0}.validate()), ConfigError);
    CHECK_THROWS_AS(variant_from_name("nope"), ConfigError);
}

TEST_CASE("identity fixture translates exactly") {
    ModelConfig c;
    c.domains = {Domain::vision, Domain::proto};
    GwModel m(c);
    set_identity(m);
    Rng rng(1);
    const PairedBatch b = proto_fixture(16, rng);
    CHECK(m.translate(Domain::vision, Domain::vision, b.a) == b.a);
    CHECK(m.translate(Domain::vision, Domain::proto, b.a) == b.b);
    CHECK(m.translate(Domain::proto, Domain::vision, b.b) == b.a);

    const double floor = specialists::proto_loss_floor();
    const double tr = value([&](Graph& g) { return loss_translation(g, m, b); });
    CHECK(tr == Catch::Approx(0.5 * floor).epsilon(1e-12));
    const UnpairedBatch u{b.a, b.b};
    CHECK(value([&](Graph& g) { return loss_cycle(g, m, u); }) == 0.0);
    CHECK(value([&](Graph& g) { return loss_demicycle(g, m, u); }) == 0.0);
}

TEST_CASE("translation is deterministic and composes into the cycle") {
    const GwModel m(small_config());
    Rng rng(2);
    const Matrix z = random_matrix(5, 12, rng);
    CHECK(m.translate(Domain::vision, Domain::text, z) == m.translate(Domain::vision, Domain::text, z));
    const Matrix there = m.translate(Domain::vision, Domain::text, z);
    CHECK(m.translate(Domain::text, Domain::vision, there) == m.cycle(Domain::vision, z));
    CHECK_THROWS_AS(m.translate(Domain::proto, Domain::text, z), ContractViolation);
}

TEST_CASE("translation loss arithmetic and symmetry") {
    GwModel id;
    set_identity(id);
    Rng rng(3);
    PairedBatch one{random_matrix(1, 12, rng), Matrix(1, 12)};
    one.b = one.a;
    one.b(0, 0) += 1.0;
    Graph g(false);
    const auto t = translation_terms(g, id, one);
    CHECK(g.scalar(t.a_to_b) == Catch::Approx(1.0 / 12).epsilon(1e-12));
    CHECK(g.scalar(t.mean) == Catch::Approx(1.0 / 12).epsilon(1e-12));

    // Same networks with the domain labels swapped.
    GwModel m(small_config());
    GwModel swapped(small_config({Domain::text, Domain::vision}));
    for (Domain d : {Domain::vision, Domain::text}) {
        swapped.encoder(d) = m.encoder(d);
        swapped.decoder(d) = m.decoder(d);
    }
    const PairedBatch b{random_matrix(6, 12, rng), random_matrix(6, 12, rng)};
    const PairedBatch rb{b.b, b.a};
    Graph g1(false), g2(false);
    const auto t1 = translation_terms(g1, m, b);
    const auto t2 = translation_terms(g2, swapped, rb);
    CHECK(g1.scalar(t1.a_to_b) == g2.scalar(t2.b_to_a));
    CHECK(g1.scalar(t1.b_to_a) == g2.scalar(t2.a_to_b));
    CHECK(g1.scalar(t1.mean) == Catch::Approx(g2.scalar(t2.mean)).epsilon(1e-15));

    CHECK_THROWS_AS(value([&](Graph& h) { return loss_translation(h, m, PairedBatch{}); }), ContractViolation);
}

TEST_CASE("contrastive loss closed forms") {
    GwModel id;
    set_identity(id);
    const double eps = kCosineEpsilon;

    Matrix aligned(2, 12);
    aligned(0, 0) = 0.7;
    aligned(1, 1) = 0.4;
    const PairedBatch b{aligned, aligned};
    const double lit = value([&](Graph& g) { return loss_contrastive(g, id, b); });
    CHECK(lit >= 0.0);
    CHECK(lit <= 2.0 * std::abs(std::log(1.0 - eps)));

    Matrix collapsed(2, 12);
    collapsed(0, 0) = 1.0;
    collapsed(1, 0) = 3.0;
    const double col = value([&](Graph& g) { return loss_contrastive(g, id, {collapsed, collapsed}); });
    const double p = 1.0 - eps;
    CHECK(col == Catch::Approx((-2.0 * std::log(1.0 - p) - 2.0 * std::log(p)) / 4.0).epsilon(1e-9));
    CHECK(col > 5.0);

    Matrix ortho(3, 12);
    for (std::size_t i = 0; i < 3; ++i) ortho(i, i) = 1.0 + static_cast<double>(i);
    const double nce = value([&](Graph& g) { return loss_contrastive(g, id, {ortho, ortho}, ContrastiveMode::infonce); });
    const double T = kInfoNceTemperature;
    CHECK(nce == Catch::Approx(std::log(1.0 + 2.0 * std::exp(-1.0 / T))).epsilon(1e-9));

    CHECK_THROWS_AS(value([&](Graph& g) { return loss_contrastive(g, id, {Matrix(1, 12), Matrix(1, 12)}); }),
                    ContractViolation);
}

TEST_CASE("literal contrastive loss is permutation equivariant") {
    const GwModel m(small_config());
    Rng rng(4);
    const PairedBatch b{random_matrix(7, 12, rng), random_matrix(7, 12, rng)};
    std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    const PairedBatch pb{b.a.gather_rows(perm), b.b.gather_rows(perm)};
    for (ContrastiveMode mode : {ContrastiveMode::literal, ContrastiveMode::infonce}) {
        const double x = value([&](Graph& g) { return loss_contrastive(g, m, b, mode); });
        const double y = value([&](Graph& g) { return loss_contrastive(g, m, pb, mode); });
        CHECK(x == Catch::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("cycle loss arithmetic") {
    GwModel id;
    set_identity(id);
    Rng rng(5);
    const Matrix z = random_matrix(1, 12, rng);
    CHECK(value([&](Graph& g) { return loss_cycle(g, id, {z, z}); }) == 0.0);
    id.decoder(Domain::vision).bias(3).value(0, 0) = 0.1;
    const double cy = value([&](Graph& g) { return loss_cycle(g, id, {z, Matrix(0, 12)}); });
    CHECK(cy == Catch::Approx(0.01 / 12 * 0.5).epsilon(1e-9));
    CHECK_THROWS_AS(value([&](Graph& g) { return loss_cycle(g, id, {Matrix(0, 12), Matrix(0, 12)}); }),
                    ContractViolation);
}

TEST_CASE("demi-cycle loss") {
    const GwModel m(small_config());
    Rng rng(6);
    const UnpairedBatch u{random_matrix(5, 12, rng), random_matrix(4, 12, rng)};
    const double d = value([&](Graph& g) { return loss_demicycle(g, m, u); });
    CHECK(d > 0.0);
    auto mse = [](const Matrix& x, const Matrix& y) {
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x.values()[i] - y.values()[i]) * (x.values()[i] - y.values()[i]);
        return s / static_cast<double>(x.size());
    };
    const double manual = 0.5 * (mse(m.translate(Domain::vision, Domain::vision, u.a), u.a) +
                                 mse(m.translate(Domain::text, Domain::text, u.b), u.b));
    CHECK(d == Catch::Approx(manual).epsilon(1e-12));
    GwModel id;
    set_identity(id);
    CHECK(value([&](Graph& g) { return loss_demicycle(g, id, u); }) == 0.0);
}

TEST_CASE("total loss combination") {
    const GwModel m(small_config());
    Rng rng(7);
    const PairedBatch b{random_matrix(6, 12, rng), random_matrix(6, 12, rng)};
    const UnpairedBatch u{random_matrix(5, 12, rng), random_matrix(3, 12, rng)};

    Graph g0;
    const auto only_tr = total_loss(g0, m, {1.0, 0, 0, 0}, b, u);
    CHECK(g0.scalar(only_tr.total) == value([&](Graph& g) { return loss_translation(g, m, b); }));
    CHECK(only_tr.breakdown.contrastive.has_value());
    CHECK(only_tr.breakdown.cycle.has_value());

    const LossWeights w{1.0, 0.3, 0.7, 0.2};
    Graph g1, g2;
    const auto t1 = total_loss(g1, m, w, b, u);
    const auto t2 = total_loss(g2, m, w.scaled(2.0), b, u);
    CHECK(g2.scalar(t2.total) == Catch::Approx(2.0 * g1.scalar(t1.total)).epsilon(1e-12));
    CHECK(*t1.breakdown.cycle == *t2.breakdown.cycle);
    CHECK(*t1.breakdown.translation == *t2.breakdown.translation);
    const auto& r = t1.breakdown;
    const double resum = w.translation * *r.translation + w.contrastive * *r.contrastive + w.cycle * *r.cycle +
                         w.demi_cycle * *r.demi_cycle;
    CHECK(std::abs(resum - g1.scalar(t1.total)) < 1e-12);
    CHECK(std::abs(r.total - g1.scalar(t1.total)) < 1e-12);

    Graph g3;
    const PairedBatch single{b.a.gather_rows(std::vector<std::size_t>{0}), b.b.gather_rows(std::vector<std::size_t>{0})};
    const auto t3 = total_loss(g3, m, w, single, u);
    CHECK_FALSE(t3.breakdown.contrastive.has_value());

    Graph g4;
    CHECK_THROWS_AS(total_loss(g4, m, {1.0, -1.0, 0, 0}, b, u), ConfigError);
}

TEST_CASE("combined objective equals the separate terms") {
    ModelConfig cfg;
    cfg.domains = {Domain::vision, Domain::proto};
    cfg.seed = 12;
    const GwModel m(cfg);
    Rng rng(13);
    const PairedBatch b = proto_fixture(9, rng);
    const LossWeights w{1.0, 0.4, 0.6, 0.8};
    for (const UnpairedBatch& u : {UnpairedBatch{random_matrix(7, 12, rng), random_matrix(4, 11, rng)},
                                   UnpairedBatch{random_matrix(5, 12, rng), Matrix(0, 11)},
                                   UnpairedBatch{Matrix(0, 12), random_matrix(3, 11, rng)}}) {
        Graph g;
        const auto t = total_loss(g, m, w, b, u);
        g.backward(t.total);
        Graph r;
        const Var tr = loss_translation(r, m, b), co = loss_contrastive(r, m, b);
        const Var cy = loss_cycle(r, m, u), dc = loss_demicycle(r, m, u);
        const Var sum = r.add(r.add(r.scale(tr, w.translation), r.scale(co, w.contrastive)),
                              r.add(r.scale(cy, w.cycle), r.scale(dc, w.demi_cycle)));
        r.backward(sum);
        CHECK(*t.breakdown.translation == Catch::Approx(r.scalar(tr)).epsilon(1e-12));
        CHECK(*t.breakdown.contrastive == Catch::Approx(r.scalar(co)).epsilon(1e-12));
        CHECK(*t.breakdown.cycle == Catch::Approx(r.scalar(cy)).epsilon(1e-12));
        CHECK(*t.breakdown.demi_cycle == Catch::Approx(r.scalar(dc)).epsilon(1e-12));
        const auto params = m.parameters();
        const auto ga = g.gradients(params), gb = r.gradients(params);
        for (std::size_t i = 0; i < params.size(); ++i) {
            INFO(params[i]->name);
            CHECK(gw::testing::relative_error(std::vector{ga[i]}, std::vector{gb[i]}) < 1e-10);
        }
    }
}

TEST_CASE("total loss gradient matches finite differences") {
    GwModel m(small_config());
    Rng rng(8);
    const PairedBatch b{random_matrix(4, 12, rng), random_matrix(4, 12, rng)};
    const UnpairedBatch u{random_matrix(4, 12, rng), random_matrix(4, 12, rng)};
    const LossWeights w{1.0, 0.5, 0.7, 0.3};
    for (ContrastiveMode mode : {ContrastiveMode::literal, ContrastiveMode::infonce}) {
        Graph g;
        const auto t = total_loss(g, m, w, b, u, mode);
        g.backward(t.total);
        auto params = m.parameters();
        const std::vector<const Parameter*> cparams(params.begin(), params.end());
        const auto analytic = g.gradients(cparams);
        const auto numeric = gw::testing::numeric_gradient(params, [&] {
            Graph h(false);
            return h.scalar(total_loss(h, m, w, b, u, mode, false).total);
        });
        for (std::size_t i = 0; i < params.size(); ++i) {
            INFO(params[i]->name);
            CHECK(gw::testing::relative_error(std::vector{analytic[i]}, std::vector{numeric[i]}) < 1e-3);
        }
    }
}

TEST_CASE("contrastive term does not reach the decoders") {
    GwModel m(small_config());
    Rng rng(9);
    const PairedBatch b{random_matrix(5, 12, rng), random_matrix(5, 12, rng)};
    Graph g;
    g.backward(loss_contrastive(g, m, b));
    for (Domain d : m.domains()) {
        for (const Matrix& grad : g.gradients(std::as_const(m).decoder(d).parameters()))
            for (double v : grad.values()) REQUIRE(v == 0.0);
        double enc = 0;
        for (const Matrix& grad : g.gradients(std::as_const(m).encoder(d).parameters()))
            for (double v : grad.values()) enc += std::abs(v);
        CHECK(enc > 0.0);
    }
}

TEST_CASE("objectives reach their floors together on matched fixtures") {
    // Orthogonal batch, identical linear domains: translation, demi-cycle and the
    // unclamped literal contrastive loss are all at zero at once.
    GwModel id;
    set_identity(id);
    Matrix z(4, 12);
    for (std::size_t i = 0; i < 4; ++i) z(i, 2 * i) = 0.5 + 0.1 * static_cast<double>(i);
    const PairedBatch b{z, z};
    CHECK(value([&](Graph& g) { return loss_translation(g, id, b); }) == 0.0);
    CHECK(value([&](Graph& g) { return loss_demicycle(g, id, {z, z}); }) == 0.0);
    CHECK(value([&](Graph& g) { return loss_cycle(g, id, {z, z}); }) == 0.0);
    CHECK(value([&](Graph& g) { return loss_contrastive(g, id, b); }) <= 2.0 * std::abs(std::log(1.0 - kCosineEpsilon)));

    // Paired proto fixture: translation at its floor implies zero cycle loss.
    ModelConfig c;
    c.domains = {Domain::vision, Domain::proto};
    GwModel mp(c);
    set_identity(mp);
    Rng rng(10);
    const PairedBatch pb = proto_fixture(8, rng);
    CHECK(value([&](Graph& g) { return loss_translation(g, mp, pb); }) ==
          Catch::Approx(0.5 * specialists::proto_loss_floor()).epsilon(1e-12));
    CHECK(value([&](Graph& g) { return loss_cycle(g, mp, {pb.a, pb.b}); }) == 0.0);
}

TEST_CASE("checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "gw_test_core.ckpt";
    const GwModel m(small_config());
    m.save(path, {{"variant", "trans_cont"}});
    nlohmann::json extra;
    const GwModel back = GwModel::load(path, &extra);
    CHECK(extra.at("variant") == "trans_cont");
    const auto p1 = m.parameters(), p2 = back.parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);

    const std::string bytes = read_file(path);
    write_file(path, bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(GwModel::load(path), IoError);
    std::filesystem::remove(path);
}
