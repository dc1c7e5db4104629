// Times the serial reference kernels against the OpenMP versions and one
// full training epoch. Usage: bench_kernels [repeats]

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include <fmt/core.h>
#include <omp.h>

#include "ial/kernels.hpp"
#include "ial/balance.hpp"
#include "ial/synth.hpp"
#include "ial/trainer.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int repeats) {
    fn();
    const auto t0 = Clock::now();
    for (int i = 0; i < repeats; ++i)
        fn();
    const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
    return dt.count() / repeats;
}

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (auto& x : v)
        x = nd(rng);
    return v;
}

void bench_matmul(std::size_t n, std::size_t k, std::size_t m, int repeats, std::mt19937_64& rng) {
    namespace K = ial::kernels;
    const auto a = random_values(n * k, rng), b = random_values(k * m, rng);
    const auto g = random_values(n * m, rng);
    std::vector<double> c(n * m), ck(k * m), cn(n * k);

    const double s1 = time_ms([&] { K::serial::matmul(a, b, c, n, k, m); }, repeats);
    const double p1 = time_ms([&] { K::matmul(a, b, c, n, k, m); }, repeats);
    const double s2 = time_ms([&] { K::serial::matmul_at_b_acc(a, g, ck, n, k, m); }, repeats);
    const double p2 = time_ms([&] { K::matmul_at_b_acc(a, g, ck, n, k, m); }, repeats);
    const double s3 = time_ms([&] { K::serial::matmul_a_bt_acc(g, b, cn, n, k, m); }, repeats);
    const double p3 = time_ms([&] { K::matmul_a_bt_acc(g, b, cn, n, k, m); }, repeats);

    const auto line = [&](const char* name, double s, double p) {
        fmt::print("{:<16} {:>5}x{:<5}x{:<5} serial {:9.4f} ms  omp {:9.4f} ms  x{:.2f}\n", name, n,
                   k, m, s, p, s / p);
    };
    line("matmul", s1, p1);
    line("matmul_at_b", s2, p2);
    line("matmul_a_bt", s3, p3);
}

void bench_epoch(int repeats) {
    const ial::Scenario sc = ial::scenario("standard", 7);
    const auto [train, test] = ial::generate(sc.synth);
    ial::MultiTaskNet net = ial::init_net({sc.synth.input_dim, 32, 4},
                                          ial::task_specs(sc.synth, sc.primary, {8}), 7);
    auto strategy = ial::make_strategy("ial", {});
    std::mt19937_64 rng(1);
    const double ms = time_ms(
        [&] { ial::train_epoch(net, train, *strategy, {0.05, 0.025}, 64, rng, {}); }, repeats);
    fmt::print("{:<16} {:>17}  {:9.4f} ms per epoch ({} samples)\n", "train_epoch", "", ms,
               train.size());
}

} // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 20;
    std::mt19937_64 rng(42);
    fmt::print("threads: {}\n", omp_get_max_threads());
    for (auto [n, k, m] : {std::array<std::size_t, 3>{64, 16, 32}, {64, 32, 16}, {512, 256, 256},
                          {1024, 512, 512}})
        bench_matmul(n, k, m, repeats, rng);
    bench_epoch(std::max(1, repeats / 10));
    return 0;
}
