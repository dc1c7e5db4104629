#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "ial/balance.hpp"
#include "ial/ial.hpp"
#include "support/helpers.hpp"

using namespace ial;

namespace {

const std::vector<double> no_losses = {1.0, 1.0};

} // namespace

TEST_SUITE("balance") {

TEST_CASE("uniform") {
    const std::vector<Tensor> g = {Tensor::vector({1, 0}), Tensor::vector({0, 1})};
    const BalanceOutcome o = uniform(no_losses, g);
    CHECK(o.combined_z_grad == Tensor::vector({1, 1}));
    CHECK(o.decoder_weights == std::vector<double>{1.0, 1.0});
    CHECK(o.encoder_weights == std::vector<double>{1.0, 1.0});
    const std::vector<Tensor> one = {Tensor::vector({0.3, -2})};
    CHECK(uniform(std::vector<double>{1.0}, one).combined_z_grad == one[0]);
}

TEST_CASE("fixed") {
    const std::vector<Tensor> g = {Tensor::vector({3, 0}), Tensor::vector({0, 2})};
    CHECK(fixed(no_losses, g, 0, 0.0).combined_z_grad == g[0]);
    const BalanceOutcome o = fixed(no_losses, g, 0, 0.1);
    CHECK(o.combined_z_grad[0] == 3.0);
    CHECK(o.combined_z_grad[1] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(o.encoder_weights == std::vector<double>{1.0, 0.1});
    CHECK(o.decoder_weights == std::vector<double>{1.0, 0.1});
    CHECK_THROWS_AS(fixed(no_losses, g, 0, -1.0), std::invalid_argument);

    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Tensor> r;
        for (int t = 0; t < 4; ++t)
            r.push_back(testing_support::random_tensor({3, 5}, rng));
        const std::vector<double> l(4, 1.0);
        CHECK(fixed(l, r, 2, 1.0).combined_z_grad == uniform(l, r).combined_z_grad);
    }
}

TEST_CASE("uncertainty weighting") {
    const std::vector<double> sig = {1.0, 1.0}, losses = {2.0, 4.0};
    const UncertaintyWeights w = uncertainty_weight(losses, sig);
    CHECK(w.weights == std::vector<double>{0.5, 0.5});
    CHECK(w.regularizer == 0.0);
    CHECK(uncertainty_loss(losses, sig) == 3.0);
    CHECK(uncertainty_sigma_grad(1.0, 1.0) == 0.0);
    CHECK(uncertainty_sigma_grad(8.0, 2.0) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(uncertainty_eta_grad(1.0, 1.0) == 0.0);

    double prev = 1e300;
    for (double s = 0.1; s < 50.0; s *= 1.5) {
        const double ws = uncertainty_weight(std::vector<double>{1.0}, std::vector<double>{s}).weights[0];
        CHECK(ws > 0.0);
        CHECK(ws < prev);
        prev = ws;
    }
}

TEST_CASE("uncertainty sigma derivative against finite differences") {
    for (double s : {0.3, 1.0, 3.0})
        for (double l : {0.1, 1.0, 10.0}) {
            const double h = 1e-6 * s;
            auto f = [l](double x) { return l / (2 * x * x) + std::log(x); };
            const double num = (f(s + h) - f(s - h)) / (2 * h);
            const double ana = uncertainty_sigma_grad(l, s);
            CHECK(std::abs(ana - num) / std::max(std::abs(ana), 1e-3) < 1e-6);
        }
}

TEST_CASE("dwa") {
    const std::vector<LossPair> equal = {{{2.0, 4.0}}, {{1.0, 2.0}}, {{3.0, 6.0}}};
    for (double w : dwa(equal, 3, 2.0))
        CHECK(w == doctest::Approx(1.0).epsilon(1e-15));

    // r = (1.0, 0.5), T = 2: 2 * softmax(0.5, 0.25)
    const std::vector<LossPair> h = {{{1.0, 1.0}}, {{0.5, 1.0}}};
    const auto w = dwa(h, 2, 2.0);
    const double e1 = std::exp(0.5), e2 = std::exp(0.25);
    CHECK(w[0] == doctest::Approx(2 * e1 / (e1 + e2)).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(2 * e2 / (e1 + e2)).epsilon(1e-14));
    CHECK(std::abs(w[0] - 1.1245) < 1e-3);
    CHECK(std::abs(w[1] - 0.8755) < 1e-3);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<LossPair> r(5);
        for (auto& p : r)
            p = {u(rng), u(rng)};
        double s = 0.0;
        for (double x : dwa(r, 5, 2.0))
            s += x;
        CHECK(s == doctest::Approx(5.0).epsilon(1e-13));
    }
    CHECK(dwa({}, 3, 2.0) == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("gcs") {
    const Tensor pri = Tensor::vector({1, 0});
    {
        const std::vector<Tensor> g = {pri, Tensor::vector({-1, 0})};
        CHECK(gcs(g, 0).outcome.combined_z_grad == pri);
        CHECK(gcs(g, 0).outcome.encoder_weights[1] == 0.0);
    }
    {
        const std::vector<Tensor> g = {pri, Tensor::vector({0, 1})};
        CHECK(gcs(g, 0).outcome.encoder_weights[1] == 1.0);
        CHECK(gcs(g, 0).outcome.combined_z_grad == Tensor::vector({1, 1}));
    }
    {
        const std::vector<Tensor> g = {pri, Tensor::vector({1, 1})};
        CHECK(gcs(g, 0).outcome.combined_z_grad == Tensor::vector({2, 1}));
    }
    {
        const std::vector<Tensor> g = {Tensor::vector({0, 0}), Tensor::vector({1, 1})};
        const GcsResult r = gcs(g, 0);
        CHECK(r.degenerate);
        CHECK(r.outcome.combined_z_grad == Tensor::vector({1, 1}));
    }
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<Tensor> g;
        for (int t = 0; t < 4; ++t)
            g.push_back(testing_support::random_tensor({6}, rng));
        const Tensor c = gcs(g, 1).outcome.combined_z_grad;
        double bound = 0.0;
        for (int t = 0; t < 4; ++t)
            if (t != 1)
                bound += l2_norm(g[t]);
        CHECK(l2_norm(c + (-1.0) * g[1]) <= bound + 1e-12);
    }
}

TEST_CASE("olaux") {
    const Tensor pri = Tensor::vector({1, 0});
    {
        std::vector<double> lam = {1.0, 0.3};
        const std::vector<Tensor> g = {pri, Tensor::vector({2, 0})};
        const BalanceOutcome o = olaux(g, 0, lam, 0.05);
        // the combination uses lambda before the update
        CHECK(o.combined_z_grad[0] == doctest::Approx(1.6).epsilon(1e-15));
        CHECK(lam[1] == doctest::Approx(0.35).epsilon(1e-15));
        CHECK(lam[0] == 1.0);
    }
    {
        std::vector<double> lam = {1.0, 0.0};
        const std::vector<Tensor> g = {pri, Tensor::vector({-1, 0})};
        olaux(g, 0, lam, 0.05);
        CHECK(lam[1] == 0.0);
    }
    {
        // Scripted alternation cos = +c, -c returns lambda to its start while it stays above 0.
        std::vector<double> lam = {1.0, 0.4};
        const Tensor up = Tensor::vector({0.6, 0.8}), down = Tensor::vector({-0.6, 0.8});
        const double c = 0.6;
        double expect = 0.4;
        for (int cycle = 0; cycle < 4; ++cycle) {
            const std::vector<Tensor> a = {pri, up}, b = {pri, down};
            olaux(a, 0, lam, 0.05);
            expect += 0.05 * c;
            CHECK(lam[1] == doctest::Approx(expect).epsilon(1e-14));
            olaux(b, 0, lam, 0.05);
            expect -= 0.05 * c;
            CHECK(lam[1] == doctest::Approx(expect).epsilon(1e-14));
        }
        CHECK(lam[1] == doctest::Approx(0.4).epsilon(1e-14));
    }
}

TEST_CASE("registry") {
    CHECK(make_strategy("uniform")->name() == "uniform");
    CHECK(make_strategy("IAL")->name() == "ial");
    CHECK(make_strategy("Uw")->learns_uncertainty());
    CHECK_THROWS_AS(make_strategy("single"), std::invalid_argument);
    try {
        make_strategy("pcgrad");
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        for (auto n : strategy_names)
            CHECK(msg.find(std::string(n)) != std::string::npos);
    }
}

TEST_CASE("every strategy returns a finite combined gradient of z's shape") {
    std::mt19937_64 rng(4);
    for (auto name : strategy_names) {
        const nlohmann::json params =
            name == "single" ? nlohmann::json{{"task_index", 0}} : nlohmann::json::object();
        auto s = make_strategy(name, params);
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<Tensor> g;
            for (int t = 0; t < 3; ++t)
                g.push_back(testing_support::random_tensor({4, 3}, rng, -5.0, 5.0));
            const std::vector<double> losses = {0.5, 1.5, 2.5}, sig = {0.3, 0.8, 1.7};
            const StageInput in{losses, g, sig, 0};
            const auto dw = s->decoder_weights(in);
            CHECK(dw.size() == 3);
            const BalanceOutcome o = s->encoder_balance(in);
            CHECK(o.combined_z_grad.same_shape(g[0]));
            CHECK(o.combined_z_grad.all_finite());
            s->end_epoch(losses);
        }
    }
}

TEST_CASE("uw reuses the decoder-stage weights in the encoder stage") {
    UwStrategy uw;
    const std::vector<Tensor> g = {Tensor::vector({1, 0}), Tensor::vector({0, 1})};
    const std::vector<double> l = {1.0, 1.0}, before = {1.0, 2.0}, after = {0.5, 0.5};
    const auto dw = uw.decoder_weights({l, g, before, 0});
    CHECK(dw[0] == 0.5);
    CHECK(dw[1] == 0.125);
    const BalanceOutcome o = uw.encoder_balance({l, g, after, 0});
    CHECK(o.combined_z_grad == Tensor::vector({0.5, 0.125}));
}

} // TEST_SUITE
