#include "ial/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "ial/balance.hpp"
#include "ial/ial.hpp"
#include "ial/trainer.hpp"

namespace ial {

namespace {

const std::set<std::string> run_config_keys = {
    "scenario",  "synth",  "strategy",    "strategy_params", "label",
    "primary",   "freeze", "epochs",      "batch_size",      "lr_params",
    "lr_eta",    "seeds",  "encoder_hidden", "feature_dim",  "decoder_hidden",
    "out"};

std::uint64_t net_seed(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 1; }
std::uint64_t shuffle_seed(std::uint64_t seed) { return seed * 0xbf58476d1ce4e5b9ULL + 2; }

std::string num(double v) { return fmt::format("{}", v); }

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct Prepared {
    SynthConfig synth;
    std::string primary;
    std::vector<std::string> freeze;
};

Prepared prepare(const RunConfig& cfg, std::uint64_t seed) {
    const Scenario sc = scenario(cfg.scenario, seed);
    Prepared p;
    p.synth = cfg.synth ? *cfg.synth : sc.synth;
    p.synth.seed = seed;
    p.primary = cfg.primary.empty() ? sc.primary : cfg.primary;
    p.freeze = cfg.freeze ? *cfg.freeze : sc.freeze;
    return p;
}

EpochRow evaluate_row(std::size_t epoch, const MultiTaskNet& net, const Dataset& train,
                      const Dataset& test, const IalConfig& fcfg) {
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = eval_losses(net, train);
    for (const auto& r : eval_net(net, test))
        row.test_metric.push_back(r.value);
    row.sigma = net.sigmas();
    for (double s : row.sigma)
        row.f_sigma.push_back(f_weight(s, fcfg));
    const std::size_t k = net.task_count();
    row.decoder_weight.assign(k, 0.0);
    row.encoder_weight.assign(k, 0.0);
    row.z_grad_norm.assign(k, 0.0);
    row.scaled_grad_norm.assign(k, 0.0);
    return row;
}

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed) {
    const Prepared p = prepare(cfg, seed);
    const auto specs = task_specs(p.synth, p.primary, cfg.decoder_hidden);
    const auto [train, test] = generate(p.synth);

    std::vector<std::size_t> widths = {p.synth.input_dim};
    widths.insert(widths.end(), cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
    widths.push_back(cfg.feature_dim);
    MultiTaskNet net = init_net(widths, specs, net_seed(seed));

    auto strategy = make_strategy(cfg.strategy, cfg.strategy_params);
    IalConfig fcfg;
    if (const auto* ial = dynamic_cast<const IalStrategy*>(strategy.get()))
        fcfg = ial->config();
    const std::set<std::string> freeze(p.freeze.begin(), p.freeze.end());
    const StepSizes lr{cfg.lr_params, cfg.lr_eta};
    std::mt19937_64 rng(shuffle_seed(seed));

    SeedResult res;
    res.seed = seed;
    res.rows.push_back(evaluate_row(0, net, train, test, fcfg));
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
        const EpochStats st = train_epoch(net, train, *strategy, lr, cfg.batch_size, rng, freeze);
        EpochRow row = evaluate_row(e, net, train, test, fcfg);
        row.decoder_weight = st.last_decoder_weights;
        row.encoder_weight = st.last_encoder_weights;
        row.z_grad_norm = st.mean_z_grad_norms;
        row.scaled_grad_norm = st.mean_scaled_grad_norms;
        for (const auto* v : {&row.train_loss, &row.test_metric, &row.sigma, &row.z_grad_norm})
            for (double x : *v)
                if (!std::isfinite(x))
                    throw std::runtime_error(fmt::format(
                        "non-finite value in epoch {} of seed {} ({}); lower the learning rate",
                        e, seed, cfg.effective_label()));
        res.rows.push_back(std::move(row));
    }
    return res;
}

nlohmann::json per_task(const std::vector<TaskSpec>& tasks, const std::vector<double>& v) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t t = 0; t < tasks.size(); ++t)
        j[tasks[t].id] = v[t];
    return j;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

template <typename T>
std::vector<T> get_list(const nlohmann::json& j, const char* key) {
    if (!j.at(key).is_array())
        throw std::invalid_argument(std::string("'") + key + "' must be an array");
    return j.at(key).get<std::vector<T>>();
}

} // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw std::invalid_argument("run config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!run_config_keys.contains(key))
            throw std::invalid_argument("unknown run config key '" + key + "'");
    RunConfig c;
    c.scenario = j.value("scenario", c.scenario);
    if (j.contains("synth"))
        c.synth = synth_config_from_json(j.at("synth"));
    c.strategy = j.value("strategy", c.strategy);
    if (j.contains("strategy_params"))
        c.strategy_params = j.at("strategy_params");
    c.label = j.value("label", c.label);
    c.primary = j.value("primary", c.primary);
    if (j.contains("freeze"))
        c.freeze = get_list<std::string>(j, "freeze");
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_params = j.value("lr_params", c.lr_params);
    c.lr_eta = j.value("lr_eta", c.lr_eta);
    if (j.contains("seeds"))
        c.seeds = get_list<std::uint64_t>(j, "seeds");
    if (j.contains("encoder_hidden"))
        c.encoder_hidden = get_list<std::size_t>(j, "encoder_hidden");
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    if (j.contains("decoder_hidden"))
        c.decoder_hidden = get_list<std::size_t>(j, "decoder_hidden");
    if (j.contains("out"))
        c.out = j.at("out").get<std::string>();
    validate(c);
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j = {{"scenario", c.scenario},
                        {"strategy", c.strategy},
                        {"strategy_params", c.strategy_params},
                        {"label", c.effective_label()},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"lr_params", c.lr_params},
                        {"lr_eta", c.lr_eta},
                        {"seeds", c.seeds},
                        {"encoder_hidden", c.encoder_hidden},
                        {"feature_dim", c.feature_dim},
                        {"decoder_hidden", c.decoder_hidden}};
    if (c.synth)
        j["synth"] = to_json(*c.synth);
    if (!c.primary.empty())
        j["primary"] = c.primary;
    if (c.freeze)
        j["freeze"] = *c.freeze;
    return j;
}

void validate(const RunConfig& c) {
    if (c.batch_size == 0)
        throw std::invalid_argument("batch_size must be positive");
    if (c.seeds.empty())
        throw std::invalid_argument("at least one seed is required");
    if (!(c.lr_params >= 0.0) || !(c.lr_eta >= 0.0))
        throw std::invalid_argument("learning rates must be non-negative");
    if (c.feature_dim == 0)
        throw std::invalid_argument("feature_dim must be positive");
    (void)make_strategy(c.strategy, c.strategy_params);
    const Prepared p = prepare(c, c.seeds.front());
    validate(p.synth);
    const auto specs = task_specs(p.synth, p.primary, c.decoder_hidden);
    for (const auto& f : p.freeze)
        if (std::none_of(specs.begin(), specs.end(), [&](const TaskSpec& s) { return s.id == f; }))
            throw std::invalid_argument("freeze lists unknown task '" + f + "'");
}

std::size_t last_quarter_start(std::size_t epochs) {
    if (epochs == 0)
        return 0;
    const std::size_t q = (epochs + 3) / 4;
    return epochs - q + 1;
}

RunResult execute(const RunConfig& cfg) {
    validate(cfg);
    RunResult result;
    result.config = cfg;
    const Prepared p = prepare(cfg, cfg.seeds.front());
    result.tasks = task_specs(p.synth, p.primary, cfg.decoder_hidden);
    result.seeds.resize(cfg.seeds.size());

    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    const auto n = static_cast<std::int64_t>(cfg.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            result.seeds[idx] = run_seed(cfg, cfg.seeds[idx]);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return result;
}

nlohmann::json summarize(const RunResult& r) {
    const auto& tasks = r.tasks;
    const std::size_t k = tasks.size();
    nlohmann::json per_seed = nlohmann::json::array();
    std::vector<std::vector<double>> finals(k), sigmas(k), fq(k);
    for (const auto& s : r.seeds) {
        const EpochRow& last = s.rows.back();
        const std::size_t start = last_quarter_start(last.epoch);
        std::vector<double> f_mean(k, 0.0);
        for (std::size_t e = start; e < s.rows.size(); ++e)
            for (std::size_t t = 0; t < k; ++t)
                f_mean[t] += s.rows[e].f_sigma[t];
        for (double& v : f_mean)
            v /= static_cast<double>(s.rows.size() - start);
        for (std::size_t t = 0; t < k; ++t) {
            finals[t].push_back(last.test_metric[t]);
            sigmas[t].push_back(last.sigma[t]);
            fq[t].push_back(f_mean[t]);
        }
        per_seed.push_back({{"seed", s.seed},
                            {"final", per_task(tasks, last.test_metric)},
                            {"final_sigma", per_task(tasks, last.sigma)},
                            {"f_sigma_last_quarter", per_task(tasks, f_mean)}});
    }
    std::vector<double> mean(k), sd(k), mean_sigma(k), mean_fq(k);
    for (std::size_t t = 0; t < k; ++t) {
        mean[t] = mean_of(finals[t]);
        sd[t] = sample_std(finals[t]);
        mean_sigma[t] = mean_of(sigmas[t]);
        mean_fq[t] = mean_of(fq[t]);
    }
    nlohmann::json task_list = nlohmann::json::array();
    for (const auto& t : tasks)
        task_list.push_back({{"id", t.id},
                             {"role", std::string(to_string(t.role))},
                             {"metric", t.loss == LossKind::mse ? "mse" : "accuracy_percent"},
                             {"direction", std::string(to_string(t.direction))}});
    return {{"schema", summary_schema},
            {"config", to_json(r.config)},
            {"tasks", task_list},
            {"per_seed", per_seed},
            {"mean", per_task(tasks, mean)},
            {"std", per_task(tasks, sd)},
            {"mean_final_sigma", per_task(tasks, mean_sigma)},
            {"mean_f_sigma_last_quarter", per_task(tasks, mean_fq)}};
}

std::string format_run_csv(const RunResult& r, std::size_t seed_index) {
    static constexpr const char* columns[] = {"train_loss",     "test_metric",    "sigma",
                                              "f_sigma",        "decoder_weight", "encoder_weight",
                                              "zgrad_norm",     "zgrad_norm_scaled"};
    std::string out = "schema,epoch";
    for (const char* c : columns)
        for (const auto& t : r.tasks)
            out += "," + t.id + "." + c;
    out += '\n';
    for (const auto& row : r.seeds.at(seed_index).rows) {
        out += std::string(run_csv_schema) + "," + std::to_string(row.epoch);
        for (const auto* v : {&row.train_loss, &row.test_metric, &row.sigma, &row.f_sigma,
                              &row.decoder_weight, &row.encoder_weight, &row.z_grad_norm,
                              &row.scaled_grad_norm})
            for (double x : *v)
                out += "," + num(x);
        out += '\n';
    }
    return out;
}

std::filesystem::path output_root(const RunConfig& cfg) {
    if (const char* env = std::getenv("IAL_OUT"); env && *env)
        return env;
    return cfg.out;
}

void write_outputs(const RunResult& r, const std::filesystem::path& out_root) {
    const auto dir = out_root / r.config.effective_label();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " +
                                 ec.message());
    for (std::size_t i = 0; i < r.seeds.size(); ++i)
        write_file(dir / fmt::format("seed{}.csv", r.seeds[i].seed), format_run_csv(r, i));
    write_file(dir / "summary.json", summarize(r).dump(2) + "\n");
}

nlohmann::json run(const RunConfig& cfg) {
    const RunResult r = execute(cfg);
    write_outputs(r, output_root(cfg));
    return summarize(r);
}

std::vector<RunConfig> compare_configs_from_json(const nlohmann::json& j) {
    std::vector<RunConfig> out;
    if (j.is_array()) {
        for (const auto& e : j)
            out.push_back(run_config_from_json(e));
    } else if (j.is_object() && j.contains("strategies")) {
        const nlohmann::json base = j.value("base", nlohmann::json::object());
        for (const auto& entry : j.at("strategies")) {
            nlohmann::json merged = base;
            merged.update(entry);
            out.push_back(run_config_from_json(merged));
        }
    } else {
        throw std::invalid_argument(
            "compare config must be an array of run configs or {\"base\", \"strategies\"}");
    }
    if (out.empty())
        throw std::invalid_argument("compare config lists no strategies");
    return out;
}

Comparison compare(const std::vector<RunConfig>& cfgs, bool write_runs) {
    if (cfgs.empty())
        throw std::invalid_argument("compare needs at least one config");
    const RunConfig& ref = cfgs.front();
    for (const auto& c : cfgs) {
        const bool same_data = c.scenario == ref.scenario && c.seeds == ref.seeds &&
                               c.synth == ref.synth && c.primary == ref.primary;
        if (!same_data)
            throw std::invalid_argument("compare configs must share scenario, data and seeds ('" +
                                        c.effective_label() + "' differs)");
    }

    Comparison cmp;
    std::vector<RunResult> results;
    for (const auto& c : cfgs)
        results.push_back(execute(c));
    cmp.tasks = results.front().tasks;
    const std::size_t k = cmp.tasks.size();

    ComparisonRow single{"single", std::vector<double>(k), std::vector<double>(k), 0.0};
    std::vector<RunResult> singles;
    for (std::size_t t = 0; t < k; ++t) {
        RunConfig c = ref;
        c.strategy = "single";
        c.strategy_params = {{"task_index", t}};
        c.label = "single_" + cmp.tasks[t].id;
        c.freeze = std::vector<std::string>{};
        singles.push_back(execute(c));
        const auto s = summarize(singles.back());
        single.mean[t] = s.at("mean").at(cmp.tasks[t].id).get<double>();
        single.std[t] = s.at("std").at(cmp.tasks[t].id).get<double>();
    }

    std::vector<MetricRecord> single_recs;
    for (std::size_t t = 0; t < k; ++t)
        single_recs.push_back({cmp.tasks[t].id, single.mean[t], cmp.tasks[t].direction});
    cmp.rows.push_back(single);
    for (const auto& r : results) {
        const auto s = summarize(r);
        ComparisonRow row{r.config.effective_label(), std::vector<double>(k),
                          std::vector<double>(k), 0.0};
        std::vector<MetricRecord> recs;
        for (std::size_t t = 0; t < k; ++t) {
            row.mean[t] = s.at("mean").at(cmp.tasks[t].id).get<double>();
            row.std[t] = s.at("std").at(cmp.tasks[t].id).get<double>();
            recs.push_back({cmp.tasks[t].id, row.mean[t], cmp.tasks[t].direction});
        }
        row.delta_mtl = delta_mtl(recs, single_recs);
        cmp.rows.push_back(std::move(row));
    }

    if (write_runs) {
        const auto root = output_root(ref);
        for (const auto& r : results)
            write_outputs(r, root);
        for (const auto& r : singles)
            write_outputs(r, root);
        std::filesystem::create_directories(root);
        write_file(root / "compare.csv", cmp.csv());
        write_file(root / "compare.txt", cmp.text());
    }
    return cmp;
}

std::string Comparison::csv() const {
    std::string out = "label";
    for (const auto& t : tasks)
        out += "," + t.id + ".mean," + t.id + ".std";
    out += ",delta_mtl\n";
    for (const auto& r : rows) {
        out += r.label;
        for (std::size_t t = 0; t < tasks.size(); ++t)
            out += "," + num(r.mean[t]) + "," + num(r.std[t]);
        out += "," + num(r.delta_mtl) + "\n";
    }
    return out;
}

std::string Comparison::text() const {
    // Best value per column is flagged with '*'.
    const std::size_t k = tasks.size();
    std::vector<std::size_t> best(k + 1, 0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const bool lower = tasks[t].direction == MetricDirection::lower_better;
            const double a = rows[i].mean[t], b = rows[best[t]].mean[t];
            if (lower ? a < b : a > b)
                best[t] = i;
        }
        if (rows[i].delta_mtl > rows[best[k]].delta_mtl)
            best[k] = i;
    }
    std::size_t label_w = 6;
    for (const auto& r : rows)
        label_w = std::max(label_w, r.label.size());
    std::string out = fmt::format("{:<{}}", "method", label_w);
    for (const auto& t : tasks) {
        const char* arrow = t.direction == MetricDirection::lower_better ? "(lower)" : "(higher)";
        out += fmt::format(" | {:>22}", t.id + " " + arrow);
    }
    out += fmt::format(" | {:>9}\n", "dMTL %");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out += fmt::format("{:<{}}", r.label, label_w);
        for (std::size_t t = 0; t < k; ++t)
            out += fmt::format(" | {:>9.4f} +- {:<7.4f}{}", r.mean[t], r.std[t],
                               best[t] == i ? "*" : " ");
        out += fmt::format(" | {:>+8.2f}{}\n", r.delta_mtl, best[k] == i ? "*" : " ");
    }
    return out;
}

} // namespace ial
