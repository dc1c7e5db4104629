#include "ial/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ial/balance.hpp"
#include "ial/ial.hpp"
#include "ial/net.hpp"

namespace ial {

namespace {

using Builder = std::function<NodeRef(ComputationGraph&, const std::vector<NodeRef>&)>;

struct Sampler {
    std::mt19937_64 rng;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    }
    Tensor tensor(std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.values())
            v = uniform(lo, hi);
        return t;
    }
    // Values kept away from zero so a ReLU kink is never straddled.
    Tensor off_zero(std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (double& v : t.values())
            v = (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(0.05, 1.0);
        return t;
    }
};

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0.0, sa = 0.0, sn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - n[i]));
        sa = std::max(sa, std::abs(a[i]));
        sn = std::max(sn, std::abs(n[i]));
    }
    return diff / std::max({sa, sn, 1e-4});
}

// Scalar objective of an op: its value when scalar, otherwise <probe, value>.
double objective(const std::vector<Tensor>& inputs, const Builder& build, const Tensor& probe) {
    ComputationGraph g;
    std::vector<NodeRef> leaves;
    for (const auto& t : inputs)
        leaves.push_back(g.leaf(t, false));
    const Tensor& v = g.value(build(g, leaves));
    return probe.empty() ? v.item() : dot(probe, v);
}

double check_op(std::vector<Tensor> inputs, const Builder& build, Sampler& s, double h) {
    ComputationGraph g;
    std::vector<NodeRef> leaves;
    for (const auto& t : inputs)
        leaves.push_back(g.leaf(t, true));
    const NodeRef out = build(g, leaves);
    Tensor probe;
    if (g.value(out).is_scalar()) {
        g.backward(out);
    } else {
        probe = s.tensor(g.value(out).shape());
        g.inject_grad_and_continue(out, probe);
    }
    std::vector<double> analytic, numeric;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& gr = g.grad(leaves[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            analytic.push_back(gr.empty() ? 0.0 : gr[j]);
            const double x = inputs[i][j];
            inputs[i][j] = x + h;
            const double fp = objective(inputs, build, probe);
            inputs[i][j] = x - h;
            const double fm = objective(inputs, build, probe);
            inputs[i][j] = x;
            numeric.push_back((fp - fm) / (2.0 * h));
        }
    }
    return rel_error(analytic, numeric);
}

template <typename CaseFn>
GradcheckResult repeat(std::string name, const GradcheckOptions& o, Sampler& s, CaseFn fn) {
    GradcheckResult r{std::move(name), o.cases, 0.0};
    for (std::size_t c = 0; c < o.cases; ++c)
        r.max_rel_error = std::max(r.max_rel_error, fn(s));
    return r;
}

Batch random_batch(Sampler& s, std::size_t n, std::size_t d, std::size_t classes) {
    Batch b;
    b.x = s.tensor({n, d});
    TaskTargets reg;
    reg.values = s.tensor({n, 1});
    TaskTargets cls;
    for (std::size_t i = 0; i < n; ++i)
        cls.labels.push_back(s.index(0, classes - 1));
    b.y = {reg, cls};
    return b;
}

MultiTaskNet small_net(Sampler& s, std::size_t d, std::size_t classes) {
    std::vector<TaskSpec> tasks = {
        {"pri", TaskRole::primary, LossKind::mse, MetricDirection::lower_better, {3, 1}},
        {"aux", TaskRole::auxiliary, LossKind::softmax_ce, MetricDirection::higher_better,
         {classes}}};
    MultiTaskNet net = init_net({d, 4, 3}, tasks, s.rng());
    for (std::size_t t = 0; t < net.task_count(); ++t)
        net.set_eta(t, s.uniform(-1.0, 1.0));
    return net;
}

std::vector<Tensor*> flat_params(std::vector<Layer>& layers) {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<double> flatten(const std::vector<Layer>& layers) {
    std::vector<double> out;
    for (const auto& l : layers) {
        out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
        out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
    }
    return out;
}

template <typename Loss>
std::vector<double> numeric_grad(std::vector<Layer>& layers, double h, Loss loss) {
    std::vector<double> out;
    for (Tensor* p : flat_params(layers))
        for (std::size_t j = 0; j < p->size(); ++j) {
            const double x = (*p)[j];
            (*p)[j] = x + h;
            const double fp = loss();
            (*p)[j] = x - h;
            const double fm = loss();
            (*p)[j] = x;
            out.push_back((fp - fm) / (2.0 * h));
        }
    return out;
}

double total_loss(const MultiTaskNet& net, const Batch& b) {
    const ForwardPass fp = forward(net, b);
    return fp.loss(0) + fp.loss(1);
}

double weighted_loss(const MultiTaskNet& net, const Batch& b) {
    const ForwardPass fp = forward(net, b);
    const std::vector<double> losses = {fp.loss(0), fp.loss(1)};
    return uncertainty_loss(losses, net.sigmas());
}

} // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& o) {
    Sampler s{std::mt19937_64(o.seed)};
    const double h = o.step;
    std::vector<GradcheckResult> out;

    out.push_back(repeat("matmul", o, s, [&](Sampler& s) {
        const std::size_t n = s.index(1, 4), k = s.index(1, 4), m = s.index(1, 4);
        return check_op({s.tensor({n, k}), s.tensor({k, m})},
                        [](ComputationGraph& g, const auto& in) { return g.matmul(in[0], in[1]); },
                        s, h);
    }));
    out.push_back(repeat("add", o, s, [&](Sampler& s) {
        const std::size_t n = s.index(1, 4), m = s.index(1, 4);
        return check_op({s.tensor({n, m}), s.tensor({n, m})},
                        [](ComputationGraph& g, const auto& in) { return g.add(in[0], in[1]); },
                        s, h);
    }));
    out.push_back(repeat("add_row", o, s, [&](Sampler& s) {
        const std::size_t n = s.index(1, 4), m = s.index(1, 4);
        return check_op({s.tensor({n, m}), s.tensor({m})},
                        [](ComputationGraph& g, const auto& in) { return g.add(in[0], in[1]); },
                        s, h);
    }));
    out.push_back(repeat("relu", o, s, [&](Sampler& s) {
        return check_op({s.off_zero({s.index(1, 4), s.index(1, 4)})},
                        [](ComputationGraph& g, const auto& in) { return g.relu(in[0]); }, s, h);
    }));
    out.push_back(repeat("tanh", o, s, [&](Sampler& s) {
        return check_op({s.tensor({s.index(1, 4), s.index(1, 4)}, -2.0, 2.0)},
                        [](ComputationGraph& g, const auto& in) { return g.tanh(in[0]); }, s, h);
    }));
    out.push_back(repeat("scale", o, s, [&](Sampler& s) {
        const double f = s.uniform(-3.0, 3.0);
        return check_op({s.tensor({s.index(1, 4), s.index(1, 4)})},
                        [f](ComputationGraph& g, const auto& in) { return g.scale(in[0], f); }, s,
                        h);
    }));
    out.push_back(repeat("mse", o, s, [&](Sampler& s) {
        const std::size_t n = s.index(1, 4), m = s.index(1, 4);
        const Tensor target = s.tensor({n, m});
        return check_op({s.tensor({n, m})},
                        [&target](ComputationGraph& g, const auto& in) {
                            return g.mse(in[0], target);
                        },
                        s, h);
    }));
    out.push_back(repeat("softmax_ce", o, s, [&](Sampler& s) {
        const std::size_t k = s.index(2, 6);
        const std::size_t cls = s.index(0, k - 1);
        return check_op({s.tensor({k}, -3.0, 3.0)},
                        [cls](ComputationGraph& g, const auto& in) {
                            return g.softmax_ce(in[0], cls);
                        },
                        s, h);
    }));
    out.push_back(repeat("softmax_ce_batch", o, s, [&](Sampler& s) {
        const std::size_t n = s.index(1, 5), k = s.index(2, 6);
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < n; ++i)
            labels.push_back(s.index(0, k - 1));
        return check_op({s.tensor({n, k}, -3.0, 3.0)},
                        [&labels](ComputationGraph& g, const auto& in) {
                            return g.softmax_ce(in[0], std::span<const std::size_t>(labels));
                        },
                        s, h);
    }));

    out.push_back(repeat("uncertainty_sigma", o, s, [&](Sampler& s) {
        const double loss = s.uniform(0.01, 10.0), sigma = s.uniform(0.2, 3.0);
        const auto f = [loss](double sg) {
            return loss / (2.0 * sg * sg) + std::log(sg);
        };
        const double num = (f(sigma + h) - f(sigma - h)) / (2.0 * h);
        return rel_error({uncertainty_sigma_grad(loss, sigma)}, {num});
    }));
    out.push_back(repeat("uncertainty_eta", o, s, [&](Sampler& s) {
        const double loss = s.uniform(0.01, 10.0), eta = s.uniform(-3.0, 2.0);
        const auto f = [loss](double e) { return 0.5 * loss * std::exp(-e) + 0.5 * e; };
        const double num = (f(eta + h) - f(eta - h)) / (2.0 * h);
        return rel_error({uncertainty_eta_grad(loss, std::exp(0.5 * eta))}, {num});
    }));

    out.push_back(repeat("encoder_via_feature_grad", o, s, [&](Sampler& s) {
        const std::size_t d = s.index(2, 4), classes = s.index(2, 4);
        MultiTaskNet net = small_net(s, d, classes);
        const Batch b = random_batch(s, s.index(1, 5), d, classes);
        ForwardPass fp = forward(net, b);
        const auto zg = capture_feature_grads(fp);
        fp.graph.inject_grad_and_continue(fp.z, zg[0] + zg[1]);
        const auto analytic = flatten(collect_layers(fp, fp.encoder_leaves, net.encoder()));
        const auto numeric =
            numeric_grad(net.encoder_mut(), h, [&] { return total_loss(net, b); });
        return rel_error(analytic, numeric);
    }));
    out.push_back(repeat("decoder_stage", o, s, [&](Sampler& s) {
        const std::size_t d = s.index(2, 4), classes = s.index(2, 4);
        MultiTaskNet net = small_net(s, d, classes);
        const Batch b = random_batch(s, s.index(1, 5), d, classes);
        ForwardPass fp = forward(net, b);
        const DecoderStageResult ds = decoder_stage(fp, net);
        double worst = 0.0;
        for (std::size_t t = 0; t < net.task_count(); ++t) {
            const auto analytic = flatten(ds.grads.decoders[t]);
            const auto numeric =
                numeric_grad(net.decoder_mut(t), h, [&] { return weighted_loss(net, b); });
            worst = std::max(worst, rel_error(analytic, numeric));
            const double e = net.eta(t);
            net.set_eta(t, e + h);
            const double fp_eta = weighted_loss(net, b);
            net.set_eta(t, e - h);
            const double fm_eta = weighted_loss(net, b);
            net.set_eta(t, e);
            worst = std::max(worst,
                             rel_error({*ds.grads.eta[t]}, {(fp_eta - fm_eta) / (2.0 * h)}));
        }
        return worst;
    }));
    return out;
}

} // namespace ial
