// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ial/gradcheck.hpp"
#include "ial/harness.hpp"
#include "ial/ial.hpp"
#include "ial/metrics.hpp"
#include "ial/trainer.hpp"
#include "support/helpers.hpp"

using namespace ial;
namespace ts = testing_support;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    std::function<Outcome()> check;
};

const std::filesystem::path fixtures = IAL_FIXTURE_DIR;

// ---- experiment cache ------------------------------------------------------

struct Summary {
    std::vector<TaskSpec> tasks;
    nlohmann::json json;

    std::vector<double> per_seed(const std::string& key, const std::string& task) const {
        std::vector<double> v;
        for (const auto& s : json.at("per_seed"))
            v.push_back(s.at(key).at(task).get<double>());
        return v;
    }
    double mean(const std::string& key, const std::string& task) const {
        const auto v = per_seed(key, task);
        double a = 0.0;
        for (double x : v)
            a += x;
        return a / static_cast<double>(v.size());
    }
    std::vector<double> primary_finals() const { return per_seed("final", "primary"); }
    double primary_mean() const { return mean("final", "primary"); }
};

std::map<std::string, Summary> cache;

RunConfig config(const std::string& scenario_name, const std::string& strategy,
                 nlohmann::json params = nlohmann::json::object()) {
    RunConfig c;
    c.scenario = scenario_name;
    c.strategy = strategy;
    c.strategy_params = std::move(params);
    return c;
}

const Summary& result(const std::string& key, const RunConfig& cfg) {
    auto it = cache.find(key);
    if (it != cache.end())
        return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult r = execute(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Summary s{r.tasks, summarize(r)};
    std::fprintf(stderr, "  ran %-28s primary mean %.5f  (%.1fs)\n", key.c_str(),
                 s.primary_mean(), secs);
    return cache.emplace(key, std::move(s)).first->second;
}

const Summary& standard(const std::string& label, const std::string& strategy,
                        nlohmann::json params = nlohmann::json::object()) {
    return result("standard/" + label, config("standard", strategy, std::move(params)));
}

std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v)
        s += (s.empty() ? "" : " ") + fmt::format("{:.4f}", x);
    return s;
}

// ---- criteria --------------------------------------------------------------

Outcome dmtl_reproduction() {
    const double nyu = delta_mtl(read_metric_csv(fixtures / "nyuv2_multi.csv"),
                                 read_metric_csv(fixtures / "nyuv2_single.csv"));
    const double city = delta_mtl(read_metric_csv(fixtures / "cityscapes_multi.csv"),
                                  read_metric_csv(fixtures / "cityscapes_single.csv"));
    const bool ok = std::abs(nyu + 0.44) <= 0.01 && std::abs(city - 8.22) <= 0.01;
    return {ok, fmt::format("NYUv2 {:+.4f}% (target -0.44), Cityscapes {:+.4f}% (target +8.22)",
                            nyu, city)};
}

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckOptions opts;
    opts.cases = 100;
    const auto results = run_gradcheck(opts);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = secs < 10.0;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results) {
        ok = ok && r.cases >= 100 && r.max_rel_error < 1e-5;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = r.name;
        }
    }
    return {ok, fmt::format("{} checks x 100 cases, worst {:.2e} ({}), {:.2f}s", results.size(),
                            worst, worst_name, secs)};
}

Outcome structural_invariants() {
    std::mt19937_64 rng(2024);
    std::vector<std::string> failures;

    // Norm equality after renormalization.
    double worst_norm = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::uniform_real_distribution<double> mag(-6.0, 6.0);
        const Tensor a = std::pow(10.0, mag(rng)) * ts::random_tensor({8, 4}, rng);
        const Tensor p = std::pow(10.0, mag(rng)) * ts::random_tensor({8, 4}, rng);
        const double rel = std::abs(l2_norm(normalize_aux_grad(a, p)) - l2_norm(p)) / l2_norm(p);
        worst_norm = std::max(worst_norm, rel);
    }
    if (!(worst_norm <= 1e-12))
        failures.push_back(fmt::format("norm equality {:.2e}", worst_norm));

    // Weight bounds: f in [0,1] for both maps, primary encoder weight exactly 1 at every
    // step of real training.
    IalConfig soft;
    soft.g_map = WeightMap::softplus;
    std::uniform_real_distribution<double> ls(-12.0, 4.0);
    for (int i = 0; i < 10000; ++i) {
        const double s = std::exp(ls(rng));
        for (const auto& c : {IalConfig{}, soft}) {
            const double f = f_weight(s, c);
            if (!(f >= 0.0 && f <= 1.0)) {
                failures.push_back(fmt::format("f({}) = {}", s, f));
                break;
            }
        }
    }
    {
        const Scenario sc = scenario("standard", 0);
        SynthConfig synth = sc.synth;
        synth.n_train = 512;
        const auto [train, test] = generate(synth);
        MultiTaskNet net = init_net({synth.input_dim, 32, 16}, task_specs(synth, sc.primary, {16}), 1);
        IalStrategy s;
        std::mt19937_64 shuffle(3);
        std::size_t bad = 0, steps = 0;
        for (int e = 0; e < 40; ++e) {
            std::vector<std::size_t> order(train.size());
            for (std::size_t i = 0; i < order.size(); ++i)
                order[i] = i;
            std::shuffle(order.begin(), order.end(), shuffle);
            for (std::size_t b = 0; b < order.size(); b += 64) {
                const Batch batch = gather(train, std::span(order).subspan(b, 64));
                const StepReport r = train_step(net, batch, s, {0.05, 0.025});
                ++steps;
                bad += r.encoder_weights[net.primary_index()] != 1.0;
                for (std::size_t t = 0; t < r.encoder_weights.size(); ++t)
                    bad += !(r.encoder_weights[t] >= 0.0 && r.encoder_weights[t] <= 1.0);
            }
        }
        if (bad)
            failures.push_back(fmt::format("weight bounds violated in {} of {} steps", bad, steps));
    }

    // Decoder impartiality by target perturbation.
    std::size_t impartial_cases = 0;
    for (int c = 0; c < 50; ++c) {
        std::vector<TaskSpec> tasks = {ts::regression_task("p", TaskRole::primary, {4, 2}),
                                       ts::regression_task("a", TaskRole::auxiliary, {3, 1}),
                                       ts::classification_task("b", 3, {5})};
        MultiTaskNet net = init_net({5, 6, 4}, tasks, 100 + c);
        for (std::size_t t = 0; t < 3; ++t)
            net.set_eta(t, std::uniform_real_distribution<double>(-2.0, 2.0)(rng));
        const Batch base = ts::random_batch(net, 9, rng);
        ForwardPass f0 = forward(net, base);
        const DecoderStageResult d0 = decoder_stage(f0, net);
        for (std::size_t b = 0; b < 3; ++b) {
            Batch moved = base;
            if (tasks[b].loss == LossKind::mse)
                moved.y[b].values = ts::random_tensor(base.y[b].values.shape(), rng, -3.0, 3.0);
            else
                for (auto& l : moved.y[b].labels)
                    l = (l + 1) % 3;
            ForwardPass f1 = forward(net, moved);
            const DecoderStageResult d1 = decoder_stage(f1, net);
            for (std::size_t a = 0; a < 3; ++a)
                if (a != b && !(d1.grads.decoders[a] == d0.grads.decoders[a] &&
                                *d1.grads.eta[a] == *d0.grads.eta[a]))
                    failures.push_back(fmt::format("decoder {} moved with targets of {}", a, b));
            ++impartial_cases;
        }
    }

    // Single-task collapse, bitwise on the encoder update: (a) no auxiliaries, (b) all f = 0.
    std::size_t collapse_cases = 0;
    for (int c = 0; c < 50; ++c) {
        std::vector<TaskSpec> tasks = {ts::regression_task("p", TaskRole::primary, {4, 1}),
                                       ts::regression_task("a", TaskRole::auxiliary, {3, 1}),
                                       ts::classification_task("b", 4, {3})};
        MultiTaskNet full = init_net({4, 7, 5}, tasks, 500 + c);
        full.set_eta(1, std::log(std::uniform_real_distribution<double>(1.0, 9.0)(rng)));
        full.set_eta(2, std::log(std::uniform_real_distribution<double>(1.0, 9.0)(rng)));
        MultiTaskNet alone({tasks[0]}, full.encoder(), {full.decoder(0)}, {full.eta(0)});
        MultiTaskNet reference = alone;
        const Batch b = ts::random_batch(full, 10, rng);
        Batch bp;
        bp.x = b.x;
        bp.y = {b.y[0]};

        // Primary-only training step: plain backward of L_pri into the encoder.
        ForwardPass fr = forward(reference, bp);
        fr.graph.backward(fr.losses[0]);
        ParamGrads rg;
        rg.encoder = collect_layers(fr, fr.encoder_leaves, reference.encoder());
        apply_gradients(reference, rg, {0.05, 0.0});

        train_step(full, b, IalConfig{});
        train_step(alone, bp, IalConfig{});
        if (!(full.encoder() == reference.encoder()))
            failures.push_back("all-f=0 encoder update differs from primary-only");
        if (!(alone.encoder() == reference.encoder()))
            failures.push_back("no-auxiliary encoder update differs from primary-only");
        ++collapse_cases;
    }

    const bool ok = failures.empty();
    return {ok, ok ? fmt::format("norm err {:.1e}; f bounds + primary weight; {} impartiality and "
                                 "{} collapse cases bitwise",
                                 worst_norm, impartial_cases, collapse_cases)
                   : failures.front() + fmt::format(" (+{} more)", failures.size() - 1)};
}

Outcome oracle_equivalence() {
    std::vector<TaskSpec> tasks = {ts::regression_task("p", TaskRole::primary, {2}),
                                   ts::classification_task("a", 3)};
    MultiTaskNet net = init_net({5, 4}, tasks, 77);
    net.set_eta(0, std::log(0.49));
    net.set_eta(1, std::log(0.16));
    oracle::Params p = ts::to_oracle(net);
    std::mt19937_64 rng(78);
    const IalConfig cfg;
    double worst = 0.0;
    for (int step = 0; step < 10; ++step) {
        const Batch b = ts::random_batch(net, 16, rng);
        train_step(net, b, cfg);
        oracle::step(p, {b.x.values().begin(), b.x.values().end()}, 16, ts::to_oracle(net, b),
                     {cfg.lr_params, cfg.lr_eta, 0});
        worst = std::max(worst, ts::max_param_diff(net, p));
    }
    return {worst <= 1e-10, fmt::format("10 steps, max parameter difference {:.2e}", worst)};
}

Outcome benchmark_superiority() {
    const auto ial = standard("ial", "ial").primary_finals();
    const auto uni = standard("uniform", "uniform").primary_finals();
    const double fixed_mean = standard("fixed", "fixed").primary_mean();
    std::size_t wins = 0;
    double mi = 0, mu = 0;
    for (std::size_t i = 0; i < ial.size(); ++i) {
        wins += ial[i] <= uni[i];
        mi += ial[i] / ial.size();
        mu += uni[i] / uni.size();
    }
    const bool ok = wins >= 4 && mi < mu && mi < fixed_mean;
    return {ok, fmt::format("primary mse: ial [{}] mean {:.4f}; uniform [{}] mean {:.4f}; "
                            "fixed mean {:.4f}; ial <= uniform on {}/5 seeds",
                            list(ial), mi, list(uni), mu, fixed_mean, wins)};
}

Outcome pseudo_robustness() {
    const double ial_std = standard("ial", "ial").primary_mean();
    const double uni_std = standard("uniform", "uniform").primary_mean();
    const double ial_noisy = result("pseudo_noisy/ial", config("pseudo_noisy", "ial")).primary_mean();
    const double uni_noisy =
        result("pseudo_noisy/uniform", config("pseudo_noisy", "uniform")).primary_mean();
    // mse: degradation is the increase
    const double d_ial = ial_noisy - ial_std, d_uni = uni_noisy - uni_std;
    return {d_ial < d_uni,
            fmt::format("degradation ial {:+.4f} ({:.4f} -> {:.4f}), uniform {:+.4f} "
                        "({:.4f} -> {:.4f})",
                        d_ial, ial_std, ial_noisy, d_uni, uni_std, uni_noisy)};
}

Outcome broken_auxiliary() {
    const Scenario sc = scenario("broken_decoder", 0);
    const std::string frozen = sc.freeze.at(0);
    const Summary& ial_free = standard("ial", "ial");
    const Summary& uw_free = standard("uw", "uw");
    const Summary& ial_broken = result("broken_decoder/ial", config("broken_decoder", "ial"));
    const Summary& uw_broken = result("broken_decoder/uw", config("broken_decoder", "uw"));

    const double s_free = ial_free.mean("final_sigma", frozen);
    const double s_broken = ial_broken.mean("final_sigma", frozen);
    const double f_free = ial_free.mean("f_sigma_last_quarter", frozen);
    const double f_broken = ial_broken.mean("f_sigma_last_quarter", frozen);
    const double d_ial = ial_broken.primary_mean() - ial_free.primary_mean();
    const double d_uw = uw_broken.primary_mean() - uw_free.primary_mean();
    const bool ok = s_broken > s_free && f_broken < f_free && d_ial < d_uw;
    return {ok, fmt::format("{} sigma {:.4f} (frozen) vs {:.4f}; last-quarter f {:.4f} vs {:.4f}; "
                            "primary degradation ial {:+.4f}, uw {:+.4f}",
                            frozen, s_broken, s_free, f_broken, f_free, d_ial, d_uw)};
}

Outcome encoder_ablation() {
    const double full = standard("ial", "ial").primary_mean();
    const double uni = standard("uniform", "uniform").primary_mean();
    const double grad = standard("grad_only", "ial", {{"variant", "grad_only"}}).primary_mean();
    const double unc =
        standard("uncertainty_only", "ial", {{"variant", "uncertainty_only"}}).primary_mean();
    const bool ok = grad < uni && unc < uni && full <= grad && full <= unc;
    return {ok, fmt::format("primary mse: full {:.4f}, grad_only {:.4f}, uncertainty_only {:.4f}, "
                            "uniform {:.4f}",
                            full, grad, unc, uni)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const auto root = std::filesystem::temp_directory_path() / "ial_acceptance_determinism";
    std::filesystem::remove_all(root);
    RunConfig cfg = config("broken_decoder", "ial");
    write_outputs(execute(cfg), root / "a");
    write_outputs(execute(cfg), root / "b");
    std::size_t files = 0, same = 0, bytes = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file())
            continue;
        ++files;
        const auto rel = std::filesystem::relative(entry.path(), root / "a");
        const std::string a = slurp(entry.path());
        bytes += a.size();
        same += !a.empty() && a == slurp(root / "b" / rel);
    }
    std::filesystem::remove_all(root);
    return {files == cfg.seeds.size() + 1 && same == files,
            fmt::format("{}/{} files byte-identical ({} bytes)", same, files, bytes)};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "delta-MTL reproduces published NYUv2 and Cityscapes scores", dmtl_reproduction},
        {2, "finite-difference gradient suite", gradient_suite},
        {3, "structural invariants", structural_invariants},
        {4, "straight-line oracle equivalence", oracle_equivalence},
        {5, "standard: ial beats uniform and fixed(0.1)", benchmark_superiority},
        {6, "pseudo_noisy: ial degrades less than uniform", pseudo_robustness},
        {7, "broken_decoder: sigma rises, f falls, ial degrades less than uw", broken_auxiliary},
        {8, "encoder-balance ablation", encoder_ablation},
        {9, "byte-identical repeated runs", determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("[%s] %d. %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
                criteria.size());
    return failed ? 1 : 0;
}
