// ial: train, compare and check multi-task strategies on synthetic data.
//
//   ial run --config run.json
//   ial compare --config compare.json
//   ial dmtl --multi multi.csv --single single.csv
//   ial gradcheck
//   ial scenarios
//   ial generate --scenario standard --seed 0 --out data/

#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ial/gradcheck.hpp"
#include "ial/harness.hpp"
#include "ial/metrics.hpp"
#include "ial/synth.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_check_failed = 2;

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

int cmd_run(const std::string& config, const std::string& out) {
    ial::RunConfig cfg = ial::run_config_from_json(read_json(config));
    if (!out.empty())
        cfg.out = out;
    const nlohmann::json summary = ial::run(cfg);
    const auto root = ial::output_root(cfg) / cfg.effective_label();
    fmt::print("wrote {}\n", root.string());
    for (const auto& [task, mean] : summary.at("mean").items())
        fmt::print("  {:<16} mean {:.6f}  std {:.6f}\n", task, mean.get<double>(),
                   summary.at("std").at(task).get<double>());
    return exit_ok;
}

int cmd_compare(const std::string& config, const std::string& out) {
    auto cfgs = ial::compare_configs_from_json(read_json(config));
    if (!out.empty())
        for (auto& c : cfgs)
            c.out = out;
    const ial::Comparison cmp = ial::compare(cfgs);
    fmt::print("{}", cmp.text());
    return exit_ok;
}

int cmd_dmtl(const std::string& multi, const std::string& single) {
    const auto m = ial::read_metric_csv(multi);
    const auto s = ial::read_metric_csv(single);
    fmt::print("{:.2f}\n", ial::delta_mtl(m, s));
    return exit_ok;
}

int cmd_gradcheck(std::size_t cases, std::uint64_t seed, double tolerance) {
    ial::GradcheckOptions opts;
    opts.cases = cases;
    opts.seed = seed;
    bool ok = true;
    for (const auto& r : ial::run_gradcheck(opts)) {
        const bool pass = r.max_rel_error < tolerance;
        ok = ok && pass;
        fmt::print("{:<26} cases {:>4}  max rel error {:.3e}  {}\n", r.name, r.cases,
                   r.max_rel_error, pass ? "ok" : "FAIL");
    }
    fmt::print("{}\n", ok ? "gradcheck passed" : "gradcheck FAILED");
    return ok ? exit_ok : exit_check_failed;
}

int cmd_scenarios() {
    for (auto name : ial::scenario_names) {
        const ial::Scenario sc = ial::scenario(name, 0);
        fmt::print("{}\n  primary: {}\n  tasks:", sc.name, sc.primary);
        for (const auto& t : sc.synth.tasks)
            fmt::print(" {}", t.id);
        fmt::print("\n");
        if (!sc.freeze.empty()) {
            fmt::print("  frozen decoders:");
            for (const auto& f : sc.freeze)
                fmt::print(" {}", f);
            fmt::print("\n");
        }
        for (const auto& e : sc.expectations)
            fmt::print("  - {}\n", e);
    }
    return exit_ok;
}

int cmd_generate(const std::string& name, std::uint64_t seed, const std::string& out) {
    const ial::Scenario sc = ial::scenario(name, seed);
    const auto [train, test] = ial::generate(sc.synth);
    ial::export_csv(train, std::filesystem::path(out) / "train");
    ial::export_csv(test, std::filesystem::path(out) / "test");
    fmt::print("wrote {} train and {} test rows to {}\n", train.size(), test.size(), out);
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Primary-task-oriented multi-task training on synthetic benchmarks"};
    app.require_subcommand(1);

    std::string config, out, multi, single, scenario_name = "standard";
    std::size_t cases = 100;
    std::uint64_t seed = 0, check_seed = ial::GradcheckOptions{}.seed;
    double tolerance = 1e-5;

    auto* run = app.add_subcommand("run", "Train one strategy over every seed of a config");
    run->add_option("--config", config, "Run config (JSON)")->required();
    run->add_option("--out", out, "Output root (IAL_OUT takes precedence)");

    auto* compare = app.add_subcommand("compare", "Compare strategies on one scenario");
    compare->add_option("--config", config, "Compare config (JSON)")->required();
    compare->add_option("--out", out, "Output root (IAL_OUT takes precedence)");

    auto* dmtl = app.add_subcommand("dmtl", "Delta-MTL score of metric records, in percent");
    dmtl->add_option("--multi", multi, "Multi-task metrics CSV")->required();
    dmtl->add_option("--single", single, "Single-task metrics CSV")->required();

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    grad->add_option("--cases", cases, "Random cases per check")->check(CLI::Range(1, 100000));
    grad->add_option("--seed", check_seed, "Sampling seed");
    grad->add_option("--tolerance", tolerance, "Maximum relative error");

    auto* scen = app.add_subcommand("scenarios", "List built-in scenarios");

    auto* gen = app.add_subcommand("generate", "Export a scenario's data as CSV");
    gen->add_option("--scenario", scenario_name, "Scenario name");
    gen->add_option("--seed", seed, "Data seed");
    gen->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return exit_config;
    }

    try {
        if (run->parsed())
            return cmd_run(config, out);
        if (compare->parsed())
            return cmd_compare(config, out);
        if (dmtl->parsed())
            return cmd_dmtl(multi, single);
        if (grad->parsed())
            return cmd_gradcheck(cases, check_seed, tolerance);
        if (scen->parsed())
            return cmd_scenarios();
        if (gen->parsed())
            return cmd_generate(scenario_name, seed, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}
