#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ial/synth.hpp"

using namespace ial;

namespace {

double correlation(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

SynthTask reg(std::string id, double rho, double noise, double scale = 1.0) {
    SynthTask t;
    t.id = std::move(id);
    t.relatedness = rho;
    t.noise_std = noise;
    t.scale = scale;
    return t;
}

} // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic") {
    const Scenario s = scenario("pseudo_noisy", 3);
    const auto a = generate(s.synth);
    const auto b = generate(s.synth);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    SynthConfig other = s.synth;
    other.seed = 4;
    CHECK_FALSE(generate(other).first == a.first);
}

TEST_CASE("rho = 1 gives identical targets up to scale") {
    SynthConfig cfg;
    cfg.tasks = {reg("a", 1.0, 0.0), reg("b", 1.0, 0.0, 3.0)};
    const auto [train, test] = generate(cfg);
    CHECK(correlation(train.y[0].values, train.y[1].values) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(train.y[1].values[i] == doctest::Approx(3.0 * train.y[0].values[i]).epsilon(1e-12));
}

TEST_CASE("rho = 0 with private directions gives uncorrelated targets") {
    SynthConfig cfg;
    cfg.tasks = {reg("a", 0.0, 0.0), reg("b", 0.0, 0.0), reg("c", 0.0, 0.0)};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cfg.seed = seed;
        const auto [train, test] = generate(cfg);
        CHECK(std::abs(correlation(train.y[0].values, train.y[1].values)) < 0.1);
        CHECK(std::abs(correlation(train.y[0].values, train.y[2].values)) < 0.1);
        CHECK(std::abs(correlation(train.y[1].values, train.y[2].values)) < 0.1);
    }
}

TEST_CASE("relatedness orders target correlation") {
    SynthConfig cfg;
    cfg.tasks = {reg("p", 0.8, 0.0), reg("close", 0.8, 0.0), reg("far", 0.2, 0.0)};
    const auto [train, test] = generate(cfg);
    const double close = correlation(train.y[0].values, train.y[1].values);
    const double far = correlation(train.y[0].values, train.y[2].values);
    CHECK(close > far);
    CHECK(close > 0.4);
}

TEST_CASE("corruption touches training labels only") {
    SynthConfig cfg;
    cfg.n_train = 4000;
    SynthTask cls;
    cls.id = "cls";
    cls.kind = LossKind::softmax_ce;
    cls.classes = 4;
    cls.relatedness = 1.0;
    SynthTask full = cls;
    full.id = "junk";
    full.corrupt_fraction = 1.0;
    cfg.tasks = {cls, full};
    const auto [train, test] = generate(cfg);
    // With rho = 1 both tasks share clean labels; fully replaced labels agree ~1/k.
    std::size_t agree = 0;
    for (std::size_t i = 0; i < train.size(); ++i)
        agree += train.y[0].labels[i] == train.y[1].labels[i];
    CHECK(static_cast<double>(agree) / train.size() == doctest::Approx(0.25).epsilon(0.1));
    CHECK(test.y[0].labels == test.y[1].labels);

    SynthConfig part = cfg;
    part.tasks[1].corrupt_fraction = 0.5;
    const auto [ptrain, ptest] = generate(part);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < ptrain.size(); ++i)
        kept += ptrain.y[0].labels[i] == ptrain.y[1].labels[i];
    // half untouched plus a quarter of the replaced half by chance
    CHECK(static_cast<double>(kept) / ptrain.size() == doctest::Approx(0.625).epsilon(0.05));
}

TEST_CASE("validation and scenarios") {
    SynthConfig bad;
    bad.tasks = {reg("a", 1.5, 0.1)};
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad.tasks = {reg("a", 0.5, 0.1)};
    bad.input_dim = 0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);

    const Scenario st = scenario("standard", 0);
    REQUIRE(st.synth.tasks.size() == 3);
    CHECK(st.primary == "primary");
    std::size_t mse = 0, cls = 0;
    for (const auto& t : st.synth.tasks) {
        CHECK(t.relatedness == 0.8);
        CHECK(t.corrupt_fraction == 0.0);
        (t.kind == LossKind::mse ? mse : cls) += 1;
    }
    CHECK(mse == 2);
    CHECK(cls == 1);

    const Scenario pn = scenario("pseudo_noisy", 0);
    REQUIRE(pn.synth.tasks.size() == 5);
    CHECK(pn.synth.tasks[3].corrupt_fraction == 0.8);
    CHECK(pn.synth.tasks[4].corrupt_fraction == 0.8);
    CHECK(scenario("broken_decoder", 0).freeze.size() == 1);
    CHECK(scenario("many_tasks", 0).synth.tasks.size() == 8);
    CHECK_THROWS_AS(scenario("nosuch", 0), std::invalid_argument);
}

TEST_CASE("csv export and json round trip") {
    const Scenario s = scenario("standard", 1);
    CHECK(synth_config_from_json(to_json(s.synth)) == s.synth);
    SynthConfig small = s.synth;
    small.n_train = 10;
    small.n_test = 5;
    const auto [train, test] = generate(small);
    const auto dir = std::filesystem::temp_directory_path() / "ial_synth_csv_test";
    export_csv(train, dir);
    for (const auto& t : small.tasks)
        CHECK(std::filesystem::exists(dir / (t.id + ".csv")));
    std::ifstream in(dir / "inputs.csv");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);)
        ++lines;
    CHECK(lines == 11);
    std::filesystem::remove_all(dir);
}

} // TEST_SUITE
