#include "ial/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace ial {

namespace {

constexpr std::size_t pilot_samples = 20000;

using Vec = std::vector<double>;

double vdot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

void normalize(Vec& v) {
    const double n = std::sqrt(vdot(v, v));
    for (double& x : v)
        x /= n;
}

Vec gaussian_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(n);
    for (double& x : v)
        x = nd(rng);
    return v;
}

/// Gaussian vector made orthogonal to every vector in `basis` (assumed orthonormal).
Vec orthogonal_unit(std::size_t n, const std::vector<Vec>& basis, std::mt19937_64& rng) {
    for (;;) {
        Vec v = gaussian_vec(n, rng);
        for (const auto& b : basis) {
            const double p = vdot(v, b);
            for (std::size_t i = 0; i < n; ++i)
                v[i] -= p * b[i];
        }
        if (std::sqrt(vdot(v, v)) > 1e-8) {
            normalize(v);
            return v;
        }
    }
}

struct GroundTruth {
    std::vector<Vec> u_columns;  // latent_dim columns of length input_dim
    std::vector<Vec> heads;      // per task, unit vector in latent space
    std::vector<double> proj_sd;
    std::vector<std::vector<double>> thresholds;  // classification only
};

Vec latent_of(const double* x, const GroundTruth& gt) {
    Vec h(gt.u_columns.size());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < gt.u_columns[j].size(); ++i)
            s += x[i] * gt.u_columns[j][i];
        h[j] = std::tanh(s);
    }
    return h;
}

GroundTruth draw_ground_truth(const SynthConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    GroundTruth gt;
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        gt.u_columns.push_back(orthogonal_unit(cfg.input_dim, gt.u_columns, rng));

    const std::size_t k = cfg.tasks.size();
    std::vector<Vec> basis;
    basis.push_back(orthogonal_unit(cfg.latent_dim, {}, rng));
    const Vec common = basis.front();
    const bool mutually_orthogonal = k + 1 <= cfg.latent_dim;
    for (std::size_t t = 0; t < k; ++t) {
        Vec p = mutually_orthogonal ? orthogonal_unit(cfg.latent_dim, basis, rng)
                                    : orthogonal_unit(cfg.latent_dim, {common}, rng);
        if (mutually_orthogonal)
            basis.push_back(p);
        const double rho = cfg.tasks[t].relatedness;
        const double rest = std::sqrt(std::max(0.0, 1.0 - rho * rho));
        Vec head(cfg.latent_dim);
        for (std::size_t i = 0; i < head.size(); ++i)
            head[i] = rho * common[i] + rest * p[i];
        normalize(head);
        gt.heads.push_back(std::move(head));
    }

    // Pilot draw fixes the projection scale and the class quantiles.
    std::mt19937_64 pilot_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Vec> proj(k, Vec(pilot_samples));
    Vec x(cfg.input_dim);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t s = 0; s < pilot_samples; ++s) {
        for (double& v : x)
            v = nd(pilot_rng);
        const Vec h = latent_of(x.data(), gt);
        for (std::size_t t = 0; t < k; ++t)
            proj[t][s] = vdot(gt.heads[t], h);
    }
    for (std::size_t t = 0; t < k; ++t) {
        const double mean = std::accumulate(proj[t].begin(), proj[t].end(), 0.0) /
                            static_cast<double>(pilot_samples);
        double var = 0.0;
        for (double v : proj[t])
            var += (v - mean) * (v - mean);
        gt.proj_sd.push_back(std::sqrt(var / static_cast<double>(pilot_samples - 1)));

        std::vector<double> th;
        if (cfg.tasks[t].kind == LossKind::softmax_ce) {
            Vec sorted = proj[t];
            std::sort(sorted.begin(), sorted.end());
            const std::size_t c = cfg.tasks[t].classes;
            for (std::size_t j = 1; j < c; ++j)
                th.push_back(sorted[j * pilot_samples / c]);
        }
        gt.thresholds.push_back(std::move(th));
    }
    return gt;
}

Dataset empty_split(const SynthConfig& cfg, std::string split, std::size_t n) {
    Dataset d;
    d.split = std::move(split);
    d.x = Tensor({n, cfg.input_dim});
    for (const auto& t : cfg.tasks) {
        d.task_ids.push_back(t.id);
        d.kinds.push_back(t.kind);
        TaskTargets tt;
        if (t.kind == LossKind::mse)
            tt.values = Tensor({n, 1});
        else
            tt.labels.assign(n, 0);
        d.y.push_back(std::move(tt));
    }
    return d;
}

void corrupt(Dataset& train, const SynthConfig& cfg) {
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
        const auto& task = cfg.tasks[t];
        const auto count = static_cast<std::size_t>(
            std::llround(task.corrupt_fraction * static_cast<double>(train.size())));
        if (count == 0)
            continue;
        std::mt19937_64 rng(cfg.seed * 1000003ULL + 7919ULL * (t + 1));
        std::vector<std::size_t> rows(train.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(count);
        std::sort(rows.begin(), rows.end());
        if (task.kind == LossKind::mse) {
            const double sd = std::sqrt(task.scale * task.scale + task.noise_std * task.noise_std);
            std::normal_distribution<double> nd(0.0, sd);
            for (auto r : rows)
                train.y[t].values[r] = nd(rng);
        } else {
            std::uniform_int_distribution<std::size_t> ud(0, task.classes - 1);
            for (auto r : rows)
                train.y[t].labels[r] = ud(rng);
        }
    }
}

void write_row(std::ofstream& out, std::span<const double> row) {
    for (std::size_t i = 0; i < row.size(); ++i)
        out << (i ? "," : "") << fmt::format("{}", row[i]);
    out << '\n';
}

} // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.n_train == 0 || cfg.n_test == 0 || cfg.input_dim == 0 || cfg.latent_dim == 0)
        throw std::invalid_argument("synthetic dimensions and sample counts must be positive");
    if (cfg.latent_dim > cfg.input_dim)
        throw std::invalid_argument("latent_dim cannot exceed input_dim");
    if (cfg.tasks.empty())
        throw std::invalid_argument("synthetic config has no tasks");
    for (const auto& t : cfg.tasks) {
        if (t.id.empty())
            throw std::invalid_argument("synthetic task without an id");
        if (!(t.relatedness >= 0.0 && t.relatedness <= 1.0))
            throw std::invalid_argument("relatedness of '" + t.id + "' outside [0,1]");
        if (!(t.corrupt_fraction >= 0.0 && t.corrupt_fraction <= 1.0))
            throw std::invalid_argument("corrupt_fraction of '" + t.id + "' outside [0,1]");
        if (!(t.noise_std >= 0.0) || !(t.scale > 0.0))
            throw std::invalid_argument("noise_std/scale of '" + t.id + "' invalid");
        if (t.kind == LossKind::softmax_ce && t.classes < 2)
            throw std::invalid_argument("classification task '" + t.id + "' needs >= 2 classes");
    }
}

std::pair<Dataset, Dataset> generate(const SynthConfig& cfg) {
    validate(cfg);
    const GroundTruth gt = draw_ground_truth(cfg);

    Dataset train = empty_split(cfg, "train", cfg.n_train);
    Dataset test = empty_split(cfg, "test", cfg.n_test);

    std::mt19937_64 rng(cfg.seed + 0x5851f42d4c957f2dULL);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Dataset* d : {&train, &test}) {
        for (std::size_t r = 0; r < d->size(); ++r) {
            double* x = &d->x.at(r, 0);
            for (std::size_t i = 0; i < cfg.input_dim; ++i)
                x[i] = nd(rng);
            const Vec h = latent_of(x, gt);
            for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
                const auto& task = cfg.tasks[t];
                const double u = vdot(gt.heads[t], h);
                const double noise = nd(rng);
                if (task.kind == LossKind::mse) {
                    d->y[t].values[r] = task.scale * u / gt.proj_sd[t] + task.noise_std * noise;
                } else {
                    const auto& th = gt.thresholds[t];
                    d->y[t].labels[r] = static_cast<std::size_t>(
                        std::count_if(th.begin(), th.end(), [u](double v) { return v < u; }));
                }
            }
        }
    }
    corrupt(train, cfg);
    return {std::move(train), std::move(test)};
}

void export_csv(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "inputs.csv");
        if (!out)
            throw std::runtime_error("cannot write " + (dir / "inputs.csv").string());
        for (std::size_t i = 0; i < data.x.cols(); ++i)
            out << (i ? "," : "") << "x" << i;
        out << '\n';
        for (std::size_t r = 0; r < data.size(); ++r)
            write_row(out, data.x.values().subspan(r * data.x.cols(), data.x.cols()));
    }
    for (std::size_t t = 0; t < data.task_ids.size(); ++t) {
        std::ofstream out(dir / (data.task_ids[t] + ".csv"));
        if (!out)
            throw std::runtime_error("cannot write targets for " + data.task_ids[t]);
        if (data.kinds[t] == LossKind::mse) {
            const Tensor& v = data.y[t].values;
            for (std::size_t j = 0; j < v.cols(); ++j)
                out << (j ? "," : "") << "y" << j;
            out << '\n';
            for (std::size_t r = 0; r < v.rows(); ++r)
                write_row(out, v.values().subspan(r * v.cols(), v.cols()));
        } else {
            out << "label\n";
            for (auto l : data.y[t].labels)
                out << l << '\n';
        }
    }
}

nlohmann::json to_json(const SynthConfig& cfg) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : cfg.tasks) {
        nlohmann::json j = {{"id", t.id},
                            {"kind", std::string(to_string(t.kind))},
                            {"relatedness", t.relatedness},
                            {"noise_std", t.noise_std},
                            {"corrupt_fraction", t.corrupt_fraction},
                            {"scale", t.scale}};
        if (t.kind == LossKind::softmax_ce)
            j["classes"] = t.classes;
        tasks.push_back(std::move(j));
    }
    return {{"n_train", cfg.n_train}, {"n_test", cfg.n_test},   {"input_dim", cfg.input_dim},
            {"latent_dim", cfg.latent_dim}, {"seed", cfg.seed}, {"tasks", tasks}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig cfg;
    cfg.n_train = j.value("n_train", cfg.n_train);
    cfg.n_test = j.value("n_test", cfg.n_test);
    cfg.input_dim = j.value("input_dim", cfg.input_dim);
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    cfg.seed = j.value("seed", cfg.seed);
    for (const auto& tj : j.at("tasks")) {
        SynthTask t;
        t.id = tj.at("id").get<std::string>();
        const std::string kind = tj.value("kind", std::string("mse"));
        if (kind == "mse")
            t.kind = LossKind::mse;
        else if (kind == "softmax_ce" || kind == "classification")
            t.kind = LossKind::softmax_ce;
        else
            throw std::invalid_argument("unknown task kind '" + kind + "'");
        t.relatedness = tj.value("relatedness", t.relatedness);
        t.noise_std = tj.value("noise_std", t.noise_std);
        t.corrupt_fraction = tj.value("corrupt_fraction", t.corrupt_fraction);
        t.scale = tj.value("scale", t.scale);
        t.classes = tj.value("classes", t.classes);
        cfg.tasks.push_back(std::move(t));
    }
    validate(cfg);
    return cfg;
}

namespace {

SynthTask regression(std::string id, double rho, double noise, double scale = 1.0,
                     double corrupt = 0.0) {
    SynthTask t;
    t.id = std::move(id);
    t.kind = LossKind::mse;
    t.relatedness = rho;
    t.noise_std = noise;
    t.scale = scale;
    t.corrupt_fraction = corrupt;
    return t;
}

SynthTask classification(std::string id, double rho, std::size_t classes,
                         double corrupt = 0.0) {
    SynthTask t;
    t.id = std::move(id);
    t.kind = LossKind::softmax_ce;
    t.relatedness = rho;
    t.noise_std = 0.0;
    t.classes = classes;
    t.corrupt_fraction = corrupt;
    return t;
}

SynthConfig standard_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.tasks = {regression("primary", 0.8, 0.5), regression("aux_reg", 0.8, 0.1),
                 classification("aux_cls", 0.8, 5)};
    return cfg;
}

} // namespace

Scenario scenario(std::string_view name, std::uint64_t seed) {
    Scenario s;
    s.name = std::string(name);
    s.primary = "primary";
    if (name == "standard") {
        s.synth = standard_config(seed);
        s.expectations = {
            "ial primary test mse <= uniform on >= 4 of 5 seeds, and lower in the mean",
            "ial primary test mse lower than fixed(0.1) in the mean",
            "grad_only and uncertainty_only variants beat uniform; full ial beats both"};
    } else if (name == "pseudo_noisy") {
        s.synth = standard_config(seed);
        s.synth.tasks.push_back(regression("pseudo_reg", 0.8, 0.1, 1.0, 0.8));
        s.synth.tasks.push_back(classification("pseudo_cls", 0.8, 5, 0.8));
        s.expectations = {
            "ial primary degradation vs its standard run smaller than uniform's"};
    } else if (name == "broken_decoder") {
        s.synth = standard_config(seed);
        s.freeze = {"aux_reg"};
        s.expectations = {
            "frozen task sigma ends above its unfrozen sigma",
            "frozen task mean f(sigma) over the last quarter below the unfrozen run",
            "ial primary degradation under the freeze smaller than uw's"};
    } else if (name == "many_tasks") {
        s.synth.seed = seed;
        s.synth.latent_dim = 12;
        s.synth.tasks = {regression("primary", 0.8, 0.5),   regression("aux_a", 0.9, 0.1),
                         regression("aux_b", 0.7, 0.1),     regression("aux_c", 0.5, 0.1),
                         regression("aux_d", 0.2, 0.1),     classification("aux_e", 0.8, 5),
                         classification("aux_f", 0.4, 5),   classification("aux_g", 0.0, 5)};
        s.expectations = {"ial primary test mse <= uniform in the mean"};
    } else {
        std::string known;
        for (auto n : scenario_names)
            known += (known.empty() ? "" : ", ") + std::string(n);
        throw std::invalid_argument("unknown scenario '" + std::string(name) +
                                    "' (known: " + known + ")");
    }
    return s;
}

std::vector<TaskSpec> task_specs(const SynthConfig& synth, std::string_view primary,
                                 const std::vector<std::size_t>& decoder_hidden) {
    std::vector<TaskSpec> specs;
    bool found = false;
    for (const auto& t : synth.tasks) {
        TaskSpec s;
        s.id = t.id;
        s.role = t.id == primary ? TaskRole::primary : TaskRole::auxiliary;
        found = found || t.id == primary;
        s.loss = t.kind;
        s.direction = t.kind == LossKind::mse ? MetricDirection::lower_better
                                              : MetricDirection::higher_better;
        s.decoder_widths = decoder_hidden;
        s.decoder_widths.push_back(t.kind == LossKind::mse ? 1 : t.classes);
        specs.push_back(std::move(s));
    }
    if (!found)
        throw std::invalid_argument("primary task '" + std::string(primary) +
                                    "' is not in the task set");
    return specs;
}

} // namespace ial
