#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "nss/gan.hpp"
#include "nss/hadamard.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace nss;
using namespace nss::gan;
using nss::testing::TempDir;

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

Big big_log_sigmoid(const Big& x) { return -boost::multiprecision::log1p(boost::multiprecision::exp(-x)); }

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.seed = 31;
    cfg.fixed_t = 4;
    cfg.optimizer.eta = 1e-3;
    return cfg;
}

nn::Matrix flatten(const Batch& batch) {
    nn::Matrix m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(batch.height() * batch.width()));
    for (std::size_t n = 0; n < batch.size(); ++n)
        for (std::size_t p = 0; p < batch[n].size(); ++p)
            m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)) = batch[n].data()[p];
    return m;
}

}  // namespace

TEST_CASE("discriminator objective examples") {
    const double zero[] = {0.0};
    const auto at_zero = d_objective(zero, zero);
    CHECK(at_zero.value == doctest::Approx(2.0 * std::log(0.5)));
    CHECK(at_zero.value == doctest::Approx(-1.3863).epsilon(1e-4));
    CHECK(at_zero.grad_real[0] == doctest::Approx(0.5));
    CHECK(at_zero.grad_fake[0] == doctest::Approx(-0.5));

    const double big_real[] = {700.0}, big_fake[] = {-700.0};
    const auto sup = d_objective(big_real, big_fake);
    CHECK(std::isfinite(sup.value));
    CHECK(std::abs(sup.value) < 1e-300);
}

TEST_CASE("discriminator objective against a 50-digit oracle") {
    for (double r : {50.0, -50.0, 0.3, -7.5}) {
        for (double f : {50.0, -50.0, 2.0}) {
            const double real[] = {r}, fake[] = {f};
            const auto obj = d_objective(real, fake);
            // log(1 - sigmoid(f)) = log sigmoid(-f)
            const Big expected = big_log_sigmoid(Big(r)) + big_log_sigmoid(Big(-f));
            const double e = expected.convert_to<double>();
            CHECK(std::abs(obj.value - e) <= 1e-9 * std::max(1.0, std::abs(e)));

            const Big gr = 1 / (1 + boost::multiprecision::exp(Big(r)));
            const Big gf = -1 / (1 + boost::multiprecision::exp(Big(-f)));
            CHECK(std::abs(obj.grad_real[0] - gr.convert_to<double>()) <= 1e-9 * std::max(1e-300, gr.convert_to<double>()));
            CHECK(std::abs(obj.grad_fake[0] - gf.convert_to<double>()) <=
                  1e-9 * std::max(1e-300, std::abs(gf.convert_to<double>())));
        }
    }
}

TEST_CASE("objectives average over the batch") {
    const double real[] = {1.0, -2.0, 0.5}, fake[] = {0.0, 3.0, -1.0};
    const auto obj = d_objective(real, fake);
    double expected = 0.0;
    for (int b = 0; b < 3; ++b) expected += (log_sigmoid(real[b]) + log_sigmoid(-fake[b])) / 3.0;
    CHECK(obj.value == doctest::Approx(expected));
    const double empty[] = {0.0};
    CHECK_THROWS_AS(d_objective(std::span<const double>{}, empty), ValidationError);
    CHECK_THROWS_AS(g_objective_nonsat(std::span<const double>{}), ValidationError);
}

TEST_CASE("non-saturating generator objective") {
    const double zero[] = {0.0};
    const auto g = g_objective_nonsat(zero);
    CHECK(g.value == doctest::Approx(0.6931).epsilon(1e-4));
    CHECK(g.grad[0] == doctest::Approx(-0.5));

    // At a confidently rejected fake the non-saturating gradient stays near -1
    // while the saturating generator term log(1 - sigmoid(f)) has none.
    double f = -50.0;
    const double nonsat = oracle::central_difference(f, 1e-4, [&] {
        const double x[] = {f};
        return g_objective_nonsat(x).value;
    });
    const double saturating = oracle::central_difference(f, 1e-4, [&] { return log_sigmoid(-f); });
    CHECK(std::abs(nonsat + 1.0) < 1e-6);
    CHECK(std::abs(saturating) < 1e-20);
    const double fx[] = {-50.0};
    CHECK(g_objective_nonsat(fx).grad[0] == doctest::Approx(-1.0));
}

TEST_CASE("train with zero epochs returns the initialization") {
    const Batch data = hadamard::gen_dataset(64, 1);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    const TrainResult r = train(cfg, data);
    CHECK(r.history.empty());
    CHECK(r.checkpoint.step == 0);
    const Checkpoint init = initial_checkpoint(cfg, 64);
    CHECK(r.checkpoint.generator.identical_to(nn::round_to_float(init.generator)));
    CHECK(r.checkpoint.discriminator.identical_to(nn::round_to_float(init.discriminator)));
}

TEST_CASE("train is deterministic and thread-count independent") {
    const Batch data = hadamard::gen_dataset(256, 2);
    TrainConfig cfg = tiny_config();
    cfg.fixed_t.reset();
    cfg.schedule = AnnealSchedule{16, 5.0};
    const TrainResult a = train(cfg, data);
    const TrainResult b = train(cfg, data);
    cfg.threads = 3;
    const TrainResult c = train(cfg, data);
    for (const TrainResult* other : {&b, &c}) {
        CHECK(a.checkpoint.generator.identical_to(other->checkpoint.generator));
        CHECK(a.checkpoint.discriminator.identical_to(other->checkpoint.discriminator));
        REQUIRE(a.history.size() == other->history.size());
        for (std::size_t k = 0; k < a.history.size(); ++k) {
            CHECK(a.history[k].d_obj == other->history[k].d_obj);
            CHECK(a.history[k].g_obj == other->history[k].g_obj);
        }
    }
    cfg.seed = 32;
    const TrainResult d = train(cfg, data);
    CHECK_FALSE(a.checkpoint.generator.identical_to(d.checkpoint.generator));
}

TEST_CASE("history: i increases from 0, t anneals to 0, values finite") {
    const Batch data = hadamard::gen_dataset(320, 3);
    TrainConfig cfg = tiny_config();
    cfg.fixed_t.reset();
    cfg.batch_size = 8;
    cfg.epochs = 5;  // 200 steps
    const TrainResult r = train(cfg, data);
    REQUIRE(r.history.size() == 200);
    CHECK(r.checkpoint.step == 200);
    CHECK(r.history.front().i == 0.0);
    CHECK(r.history.front().t == 256);
    bool reached_zero = false;
    for (std::size_t k = 0; k < r.history.size(); ++k) {
        const auto& rec = r.history[k];
        CHECK(rec.step == k);
        CHECK(rec.i < 1.0);
        CHECK(std::isfinite(rec.d_obj));
        CHECK(std::isfinite(rec.g_obj));
        if (k > 0) {
            CHECK(rec.i > r.history[k - 1].i);
            CHECK(rec.t <= r.history[k - 1].t);
        }
        if (rec.t == 0 && !reached_zero) {
            reached_zero = true;
            CHECK(rec.i >= std::log(512.0) / 20.0);
        }
    }
    CHECK(reached_zero);
}

TEST_CASE("filter NONE is byte-identical to NSS with T = 0") {
    TempDir dir;
    const Batch data = hadamard::gen_dataset(128, 4);
    TrainConfig none = tiny_config();
    none.fixed_t.reset();
    none.filter = FilterKind::None;
    TrainConfig zero = none;
    zero.filter = FilterKind::NoisyScaleSpace;
    zero.schedule.initial_t = 0;
    const TrainResult a = train(none, data), b = train(zero, data);
    save_checkpoint(a.checkpoint, dir / "none.nssc");
    save_checkpoint(b.checkpoint, dir / "zero.nssc");
    write_history_csv(a.history, dir / "none.csv");
    write_history_csv(b.history, dir / "zero.csv");
    CHECK(nss::testing::file_bytes(dir / "none.nssc") == nss::testing::file_bytes(dir / "zero.nssc"));
    CHECK(nss::testing::file_bytes(dir / "none.csv") == nss::testing::file_bytes(dir / "zero.csv"));
}

TEST_CASE("projection touches exactly the first count rows") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    nn::Matrix rows(7, 64);
    for (Eigen::Index k = 0; k < rows.size(); ++k) rows.data()[k] = nd(gen);
    const Projection proj{FilterSpec{FilterKind::NoisyScaleSpace, 3, 0.15}, 7 / 2, 8, 8, RngStream(1, 2), 1};
    const nn::Matrix out = project_rows(rows, proj);
    for (Eigen::Index r = 0; r < 7; ++r) {
        if (r < 3)
            CHECK((out.row(r) - rows.row(r)).cwiseAbs().maxCoeff() > 0.0);
        else
            CHECK(out.row(r) == rows.row(r));
    }
    // Row k uses noise.derive(k), so threads and batch size do not matter.
    Projection threaded = proj;
    threaded.threads = 4;
    CHECK(project_rows(rows, threaded) == out);
    CHECK(project_rows(rows.topRows(2), proj) == out.topRows(2));
}

TEST_CASE("projection adjoint passes the dot-product test") {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> nd;
    nn::Matrix x(5, 64), y(5, 64);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = nd(gen), y.data()[k] = nd(gen);
    // The linear part: sigma = 0.
    const Projection proj{FilterSpec{FilterKind::ScaleSpace, 4, 0.0}, 2, 8, 8, RngStream(1, 2), 1};
    const double lhs = (project_rows(x, proj).array() * y.array()).sum();
    const double rhs = (x.array() * project_rows_adjoint(y, proj).array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("end-to-end gradients through the filter match finite differences") {
    const Batch data = hadamard::gen_dataset(8, 7);
    const nn::Matrix real = flatten(data);
    TrainConfig cfg;
    cfg.seed = 8;
    Checkpoint ck = initial_checkpoint(cfg, 64);
    // Wider init keeps the logits away from a flat region.
    RngStream gs(8, 1), ds(8, 2);
    ck.generator = nn::init_net(nn::generator_layers(), gs, 0.3);
    ck.discriminator = nn::init_net(nn::discriminator_layers(), ds, 0.3);
    const nn::Matrix latent = draw_latent(8, 16, RngStream(8, 3));
    const Projection real_proj{FilterSpec{FilterKind::NoisyScaleSpace, 2, 0.15}, 4, 8, 8, RngStream(9, 1), 1};
    const Projection fake_proj{FilterSpec{FilterKind::NoisyScaleSpace, 2, 0.15}, 4, 8, 8, RngStream(9, 2), 1};
    const nn::Matrix real_p = project_rows(real, real_proj);

    SUBCASE("discriminator") {
        nn::DenseNet d = ck.discriminator;
        const nn::Matrix fake_p = project_rows(nn::forward(ck.generator, latent), fake_proj);
        const auto pass = discriminator_gradient(d, real_p, fake_p);
        auto loss = [&] {
            const nn::Matrix rl = nn::forward(d, real_p), fl = nn::forward(d, fake_p);
            return -d_objective({rl.data(), 8}, {fl.data(), 8}).value;
        };
        std::vector<double> an, fd;
        auto& layers = d.mutable_layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (Eigen::Index k = 0; k < layers[l].weight.size(); k += 7) {
                an.push_back(pass.descent.weight[l].data()[k]);
                fd.push_back(oracle::central_difference(layers[l].weight.data()[k], 1e-4, loss));
            }
            for (Eigen::Index k = 0; k < layers[l].bias.size(); ++k) {
                an.push_back(pass.descent.bias[l][k]);
                fd.push_back(oracle::central_difference(layers[l].bias[k], 1e-4, loss));
            }
        }
        CHECK(oracle::max_relative_error(an, fd) < 1e-3);
    }
    SUBCASE("generator, through the filter") {
        nn::DenseNet g = ck.generator;
        const auto pass = generator_gradient(g, ck.discriminator, latent, fake_proj);
        auto loss = [&] {
            const nn::Matrix logits = nn::forward(ck.discriminator, project_rows(nn::forward(g, latent), fake_proj));
            return g_objective_nonsat({logits.data(), 8}).value;
        };
        std::vector<double> an, fd;
        auto& layers = g.mutable_layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (Eigen::Index k = 0; k < layers[l].weight.size(); k += 5) {
                an.push_back(pass.descent.weight[l].data()[k]);
                fd.push_back(oracle::central_difference(layers[l].weight.data()[k], 1e-4, loss));
            }
            for (Eigen::Index k = 0; k < layers[l].bias.size(); ++k) {
                an.push_back(pass.descent.bias[l][k]);
                fd.push_back(oracle::central_difference(layers[l].bias[k], 1e-4, loss));
            }
        }
        CHECK(oracle::max_relative_error(an, fd) < 1e-3);
    }
}

TEST_CASE("a D step leaves G bit-unchanged and vice versa") {
    const Batch data = hadamard::gen_dataset(16, 9);
    TrainConfig cfg;
    Checkpoint ck = initial_checkpoint(cfg, 64);
    const Checkpoint before = ck;
    const nn::Matrix latent = draw_latent(16, 16, RngStream(1, 1));
    const Projection proj{FilterSpec{FilterKind::NoisyScaleSpace, 8, 0.15}, 8, 8, 8, RngStream(2, 2), 1};

    auto d_adam = nn::AdamState::for_net(ck.discriminator);
    const auto d_pass = discriminator_gradient(ck.discriminator, project_rows(flatten(data), proj),
                                               project_rows(nn::forward(ck.generator, latent), proj));
    nn::adam_step(ck.discriminator, d_pass.descent, d_adam, cfg.optimizer);
    CHECK(ck.generator.identical_to(before.generator));
    CHECK_FALSE(ck.discriminator.identical_to(before.discriminator));

    const nn::DenseNet d_after = ck.discriminator;
    auto g_adam = nn::AdamState::for_net(ck.generator);
    const auto g_pass = generator_gradient(ck.generator, ck.discriminator, latent, proj);
    nn::adam_step(ck.generator, g_pass.descent, g_adam, cfg.optimizer);
    CHECK(ck.discriminator.identical_to(d_after));
    CHECK_FALSE(ck.generator.identical_to(before.generator));
}

TEST_CASE("train rejects bad configurations and reports divergence") {
    const Batch data = hadamard::gen_dataset(64, 10);
    TrainConfig cfg = tiny_config();
    cfg.batch_size = 128;
    CHECK_THROWS_AS(train(cfg, data), ValidationError);
    cfg = tiny_config();
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train(cfg, data), ValidationError);
    cfg.half_batch = false;
    CHECK_NOTHROW(cfg.validate());
    cfg = tiny_config();
    cfg.optimizer.eta = 0.0;
    CHECK_THROWS_AS(train(cfg, data), DomainError);
    cfg = tiny_config();
    cfg.fixed_t = -1;
    CHECK_THROWS_AS(train(cfg, data), DomainError);
    cfg = tiny_config();
    cfg.sigma = -0.1;
    CHECK_THROWS_AS(train(cfg, data), DomainError);

    cfg = tiny_config();
    cfg.optimizer.eta = 1e300;
    try {
        train(cfg, data);
        FAIL("expected divergence");
    } catch (const NumericalError& e) {
        const std::string what = e.what();
        CHECK(what.find("step") != std::string::npos);
        CHECK(what.find("t=") != std::string::npos);
    } catch (const ValidationError&) {
        FAIL("divergence surfaced as a validation error");
    }
}

TEST_CASE("generate: determinism, range, errors, checkpoint roundtrip") {
    TempDir dir;
    const Batch data = hadamard::gen_dataset(64, 11);
    const TrainResult r = train(tiny_config(), data);
    const Batch a = generate(r.checkpoint, 50, 3);
    CHECK(a == generate(r.checkpoint, 50, 3));
    CHECK_FALSE(a == generate(r.checkpoint, 50, 4));
    CHECK(a.size() == 50);
    CHECK(a.height() == 8);
    for (const Image& img : a)
        for (float v : img.data()) CHECK((v > -1.0f && v < 1.0f));
    CHECK_THROWS_AS(generate(r.checkpoint, 0, 3), ValidationError);

    save_checkpoint(r.checkpoint, dir / "c.nssc");
    const Checkpoint loaded = load_checkpoint(dir / "c.nssc");
    CHECK(loaded.generator.identical_to(r.checkpoint.generator));
    CHECK(loaded.discriminator.identical_to(r.checkpoint.discriminator));
    CHECK(loaded.step == r.checkpoint.step);
    CHECK(generate(loaded, 50, 3) == a);

    RngStream s(1, 1);
    const Checkpoint odd{nn::init_net(nn::generator_layers(16, 63), s), nn::init_net(nn::discriminator_layers(63), s), 0};
    CHECK_THROWS_AS(generate(odd, 4, 1), FormatError);
    const Checkpoint mismatched{r.checkpoint.generator, nn::init_net(nn::discriminator_layers(16), s), 0};
    CHECK_THROWS_AS(generate(mismatched, 4, 1), FormatError);

    const nn::DenseNet one[] = {r.checkpoint.generator};
    nn::write_checkpoint(dir / "one.nssc", one, 0);
    CHECK_THROWS_AS(load_checkpoint(dir / "one.nssc"), FormatError);
}

TEST_CASE("history CSV") {
    TempDir dir;
    const StepRecord recs[] = {{0, 0.0, 8, -1.5, 0.75}, {1, 0.5, 4, -1.25, 0.5}};
    write_history_csv(recs, dir / "h.csv");
    const auto bytes = nss::testing::file_bytes(dir / "h.csv");
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text == "step,i,t,d_obj,g_obj\n0,0,8,-1.5,0.75\n1,0.5,4,-1.25,0.5\n");
}
