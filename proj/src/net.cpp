#include "ial/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "ial/kernels.hpp"

namespace ial {

std::string_view to_string(TaskRole r) {
    return r == TaskRole::primary ? "primary" : "auxiliary";
}
std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "softmax_ce"; }
std::string_view to_string(MetricDirection d) {
    return d == MetricDirection::higher_better ? "higher_better" : "lower_better";
}

namespace {

void validate_tasks(const std::vector<TaskSpec>& tasks) {
    if (tasks.empty())
        throw std::invalid_argument("at least one task is required");
    std::unordered_set<std::string> ids;
    std::size_t primaries = 0;
    for (const auto& t : tasks) {
        if (!ids.insert(t.id).second)
            throw std::invalid_argument("duplicate task id '" + t.id + "'");
        if (t.role == TaskRole::primary)
            ++primaries;
        if (t.decoder_widths.empty())
            throw std::invalid_argument("task '" + t.id + "' has no decoder widths");
        for (auto w : t.decoder_widths)
            if (w == 0)
                throw std::invalid_argument("task '" + t.id + "' has a zero decoder width");
        if (t.loss == LossKind::softmax_ce && t.decoder_widths.back() < 2)
            throw std::invalid_argument("classification task '" + t.id +
                                        "' needs at least two classes");
    }
    if (primaries != 1)
        throw std::invalid_argument("exactly one primary task is required, got " +
                                    std::to_string(primaries));
}

Layer random_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l{Tensor({in, out}), Tensor({out})};
    for (double& v : l.weight.values())
        v = dist(rng);
    for (double& v : l.bias.values())
        v = dist(rng);
    return l;
}

Layer zeros_like(const Layer& l) {
    return {Tensor(l.weight.shape(), 0.0), Tensor(l.bias.shape(), 0.0)};
}

Tensor affine(const Tensor& x, const Layer& l) {
    const std::size_t n = x.rows(), k = x.cols(), m = l.weight.cols();
    Tensor out({n, m});
    kernels::matmul(x.values(), l.weight.values(), out.values(), n, k, m);
    kernels::add_row(out.values(), l.bias.values(), out.values(), n, m);
    return out;
}

void descend(Tensor& p, const Tensor& g, double lr) {
    if (!p.same_shape(g))
        throw std::invalid_argument("gradient shape " + g.shape_string() +
                                    " does not match parameter shape " + p.shape_string());
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] -= lr * g[i];
}

void descend(std::vector<Layer>& params, const std::vector<Layer>& grads, double lr) {
    if (grads.size() != params.size())
        throw std::invalid_argument("gradient layer count does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        descend(params[i].weight, grads[i].weight, lr);
        descend(params[i].bias, grads[i].bias, lr);
    }
}

nlohmann::json tensor_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const nlohmann::json& j, const Tensor& like) {
    Tensor t(j.at("shape").get<std::vector<std::size_t>>(),
             j.at("data").get<std::vector<double>>());
    if (!t.same_shape(like))
        throw std::invalid_argument("snapshot tensor shape " + t.shape_string() +
                                    " does not match " + like.shape_string());
    return t;
}

nlohmann::json layers_json(const std::vector<Layer>& layers) {
    auto arr = nlohmann::json::array();
    for (const auto& l : layers)
        arr.push_back({{"weight", tensor_json(l.weight)}, {"bias", tensor_json(l.bias)}});
    return arr;
}

void load_layers(std::vector<Layer>& layers, const nlohmann::json& j) {
    if (j.size() != layers.size())
        throw std::invalid_argument("snapshot layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight = tensor_from_json(j[i].at("weight"), layers[i].weight);
        layers[i].bias = tensor_from_json(j[i].at("bias"), layers[i].bias);
    }
}

} // namespace

MultiTaskNet::MultiTaskNet(std::vector<TaskSpec> tasks, std::vector<Layer> encoder,
                           std::vector<std::vector<Layer>> decoders, std::vector<double> eta)
    : tasks_(std::move(tasks)), encoder_(std::move(encoder)), decoders_(std::move(decoders)),
      eta_(std::move(eta)) {
    validate_tasks(tasks_);
    if (encoder_.empty())
        throw std::invalid_argument("encoder needs at least one layer");
    if (decoders_.size() != tasks_.size() || eta_.size() != tasks_.size())
        throw std::invalid_argument("decoder/eta count does not match task count");
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        if (tasks_[t].role == TaskRole::primary)
            primary_ = t;
}

std::size_t MultiTaskNet::index_of(std::string_view task_id) const {
    for (std::size_t t = 0; t < tasks_.size(); ++t)
        if (tasks_[t].id == task_id)
            return t;
    throw std::out_of_range("unknown task '" + std::string(task_id) + "'");
}

double MultiTaskNet::sigma(std::size_t t) const { return std::exp(eta_.at(t) / 2.0); }

std::vector<double> MultiTaskNet::sigmas() const {
    std::vector<double> s(tasks_.size());
    for (std::size_t t = 0; t < s.size(); ++t)
        s[t] = sigma(t);
    return s;
}

MultiTaskNet init_net(const std::vector<std::size_t>& encoder_widths,
                      const std::vector<TaskSpec>& tasks, std::uint64_t seed) {
    validate_tasks(tasks);
    if (encoder_widths.size() < 2)
        throw std::invalid_argument("encoder widths need an input and an output size");
    for (auto w : encoder_widths)
        if (w == 0)
            throw std::invalid_argument("encoder widths must be positive");

    std::mt19937_64 rng(seed);
    std::vector<Layer> encoder;
    for (std::size_t i = 0; i + 1 < encoder_widths.size(); ++i)
        encoder.push_back(random_layer(encoder_widths[i], encoder_widths[i + 1], rng));

    std::vector<std::vector<Layer>> decoders;
    for (const auto& task : tasks) {
        std::vector<Layer> dec;
        std::size_t in = encoder_widths.back();
        for (auto w : task.decoder_widths) {
            dec.push_back(random_layer(in, w, rng));
            in = w;
        }
        decoders.push_back(std::move(dec));
    }
    // 1/(2 sigma^2) = 0.1  <=>  sigma^2 = 5
    const double eta0 = std::log(1.0 / (2.0 * initial_task_weight));
    return MultiTaskNet(tasks, std::move(encoder), std::move(decoders),
                        std::vector<double>(tasks.size(), eta0));
}

ForwardPass forward(const MultiTaskNet& net, const Batch& batch) {
    const auto& tasks = net.tasks();
    if (batch.y.size() != tasks.size())
        throw std::invalid_argument("batch has targets for " + std::to_string(batch.y.size()) +
                                    " tasks, network has " + std::to_string(tasks.size()));
    if (batch.x.rank() != 2 || batch.x.cols() != net.input_dim())
        throw std::invalid_argument("batch input shape " + batch.x.shape_string() +
                                    " does not match encoder input width");
    const std::size_t n = batch.x.rows();

    ForwardPass fp;
    auto& g = fp.graph;
    NodeRef h = g.leaf(batch.x, false);
    for (const auto& layer : net.encoder()) {
        const NodeRef w = g.leaf(layer.weight, true);
        const NodeRef b = g.leaf(layer.bias, true);
        fp.encoder_leaves.push_back(w);
        fp.encoder_leaves.push_back(b);
        h = g.tanh(g.add(g.matmul(h, w), b));
    }
    fp.z = h;

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& dec = net.decoder(t);
        std::vector<NodeRef> leaves;
        NodeRef out = fp.z;
        for (std::size_t l = 0; l < dec.size(); ++l) {
            const NodeRef w = g.leaf(dec[l].weight, true);
            const NodeRef b = g.leaf(dec[l].bias, true);
            leaves.push_back(w);
            leaves.push_back(b);
            out = g.add(g.matmul(out, w), b);
            if (l + 1 < dec.size())
                out = g.relu(out);
        }
        fp.decoder_leaves.push_back(std::move(leaves));
        fp.outputs.push_back(out);

        const auto& target = batch.y[t];
        if (tasks[t].loss == LossKind::mse) {
            if (target.values.empty())
                throw std::invalid_argument("missing regression targets for task '" +
                                            tasks[t].id + "'");
            fp.losses.push_back(g.mse(out, target.values));
        } else {
            if (target.labels.size() != n)
                throw std::invalid_argument("missing or short labels for task '" +
                                            tasks[t].id + "'");
            fp.losses.push_back(g.softmax_ce(out, target.labels));
        }
    }
    return fp;
}

std::vector<Tensor> predict(const MultiTaskNet& net, const Tensor& x) {
    Tensor h = x;
    for (const auto& layer : net.encoder()) {
        h = affine(h, layer);
        kernels::tanh(h.values(), h.values());
    }
    std::vector<Tensor> outs;
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        Tensor o = h;
        const auto& dec = net.decoder(t);
        for (std::size_t l = 0; l < dec.size(); ++l) {
            o = affine(o, dec[l]);
            if (l + 1 < dec.size())
                for (double& v : o.values())
                    v = v > 0.0 ? v : 0.0;
        }
        outs.push_back(std::move(o));
    }
    return outs;
}

std::vector<Tensor> capture_feature_grads(ForwardPass& fp) {
    std::vector<Tensor> grads;
    grads.reserve(fp.losses.size());
    for (const NodeRef loss : fp.losses)
        grads.push_back(fp.graph.backward_to(loss, fp.z));
    return grads;
}

ParamGrads ParamGrads::empty_for(const MultiTaskNet& net) {
    ParamGrads g;
    g.decoders.resize(net.task_count());
    g.eta.resize(net.task_count());
    return g;
}

std::vector<Layer> collect_layers(const ForwardPass& fp, const std::vector<NodeRef>& leaves,
                                  const std::vector<Layer>& like, double scale) {
    std::vector<Layer> out;
    for (std::size_t l = 0; l < like.size(); ++l) {
        Layer layer = zeros_like(like[l]);
        const Tensor& gw = fp.graph.grad(leaves[2 * l]);
        const Tensor& gb = fp.graph.grad(leaves[2 * l + 1]);
        if (!gw.empty())
            layer.weight = scale * gw;
        if (!gb.empty())
            layer.bias = scale * gb;
        out.push_back(std::move(layer));
    }
    return out;
}

void apply_gradients(MultiTaskNet& net, const ParamGrads& grads, StepSizes lr,
                     const std::set<std::string>& freeze) {
    for (const auto& id : freeze)
        (void)net.index_of(id);
    if (!grads.encoder.empty())
        descend(net.encoder_mut(), grads.encoder, lr.params);
    for (std::size_t t = 0; t < grads.decoders.size() && t < net.task_count(); ++t) {
        if (grads.decoders[t].empty() || freeze.contains(net.tasks()[t].id))
            continue;
        descend(net.decoder_mut(t), grads.decoders[t], lr.params);
    }
    for (std::size_t t = 0; t < grads.eta.size() && t < net.task_count(); ++t)
        if (grads.eta[t])
            net.set_eta(t, net.eta(t) - lr.eta * *grads.eta[t]);
}

nlohmann::json to_json(const MultiTaskNet& net) {
    nlohmann::json j;
    j["encoder"] = layers_json(net.encoder());
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        const auto& id = net.tasks()[t].id;
        j["decoders"][id] = layers_json(net.decoder(t));
        j["eta"][id] = net.eta(t);
    }
    return j;
}

void load_parameters(MultiTaskNet& net, const nlohmann::json& snapshot) {
    MultiTaskNet staged = net;
    load_layers(staged.encoder_mut(), snapshot.at("encoder"));
    for (std::size_t t = 0; t < staged.task_count(); ++t) {
        const auto& id = staged.tasks()[t].id;
        load_layers(staged.decoder_mut(t), snapshot.at("decoders").at(id));
        staged.set_eta(t, snapshot.at("eta").at(id).get<double>());
    }
    net = std::move(staged);
}

} // namespace ial
