#include "ial/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ial/kernels.hpp"

namespace ial {

namespace {

std::uint64_t next_graph_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor& slot(std::vector<std::optional<Tensor>>& adj, std::size_t j,
             const std::vector<std::size_t>& shape) {
    if (!adj[j])
        adj[j].emplace(shape, 0.0);
    return *adj[j];
}

void accumulate(std::vector<std::optional<Tensor>>& adj, std::size_t j, const Tensor& g) {
    if (!adj[j])
        adj[j] = g;
    else
        *adj[j] += g;
}

} // namespace

ComputationGraph::ComputationGraph() : id_(next_graph_id()) {}

std::size_t ComputationGraph::check(NodeRef n) const {
    if (n.graph_id_ != id_)
        throw std::invalid_argument("node handle belongs to a different graph");
    return n.index_;
}

NodeRef ComputationGraph::push(Node node) {
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return NodeRef(id_, nodes_.size() - 1);
}

NodeRef ComputationGraph::leaf(Tensor value, bool requires_grad) {
    if (value.empty())
        throw std::invalid_argument("leaf value is empty");
    if (!value.all_finite())
        throw std::invalid_argument("leaf value contains non-finite entries");
    Node n;
    n.kind = OpKind::leaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeRef ComputationGraph::matmul(NodeRef a, NodeRef b) {
    const auto ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    if (va.rank() > 2 || vb.rank() != 2 || va.cols() != vb.rows())
        throw std::invalid_argument("matmul shape mismatch: " + va.shape_string() + " x " +
                                    vb.shape_string());
    const std::size_t n = va.rows(), k = va.cols(), m = vb.cols();
    Node node;
    node.kind = OpKind::matmul;
    node.in0 = ia;
    node.in1 = ib;
    node.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    node.value = Tensor({n, m});
    kernels::matmul(va.values(), vb.values(), node.value.values(), n, k, m);
    return push(std::move(node));
}

NodeRef ComputationGraph::add(NodeRef a, NodeRef b) {
    const auto ia = check(a), ib = check(b);
    const Tensor& va = nodes_[ia].value;
    const Tensor& vb = nodes_[ib].value;
    Node node;
    node.in0 = ia;
    node.in1 = ib;
    node.requires_grad = nodes_[ia].requires_grad || nodes_[ib].requires_grad;
    if (va.same_shape(vb)) {
        node.kind = OpKind::add;
        node.value = va + vb;
    } else if (va.rank() == 2 && vb.rank() == 1 && va.cols() == vb.size()) {
        node.kind = OpKind::add_row;
        node.value = Tensor(va.shape());
        kernels::add_row(va.values(), vb.values(), node.value.values(), va.rows(), va.cols());
    } else {
        throw std::invalid_argument("add shape mismatch: " + va.shape_string() + " + " +
                                    vb.shape_string());
    }
    return push(std::move(node));
}

NodeRef ComputationGraph::relu(NodeRef x) {
    const auto ix = check(x);
    Node node;
    node.kind = OpKind::relu;
    node.in0 = ix;
    node.requires_grad = nodes_[ix].requires_grad;
    node.value = nodes_[ix].value;
    for (double& v : node.value.values())
        v = v > 0.0 ? v : 0.0;
    return push(std::move(node));
}

NodeRef ComputationGraph::tanh(NodeRef x) {
    const auto ix = check(x);
    Node node;
    node.kind = OpKind::tanh;
    node.in0 = ix;
    node.requires_grad = nodes_[ix].requires_grad;
    node.value = Tensor(nodes_[ix].value.shape());
    kernels::tanh(nodes_[ix].value.values(), node.value.values());
    return push(std::move(node));
}

NodeRef ComputationGraph::scale(NodeRef x, double factor) {
    const auto ix = check(x);
    Node node;
    node.kind = OpKind::scale;
    node.in0 = ix;
    node.factor = factor;
    node.requires_grad = nodes_[ix].requires_grad;
    node.value = factor * nodes_[ix].value;
    return push(std::move(node));
}

NodeRef ComputationGraph::mse(NodeRef pred, const Tensor& target) {
    const auto ip = check(pred);
    const Tensor& vp = nodes_[ip].value;
    if (!vp.same_shape(target))
        throw std::invalid_argument("mse shape mismatch: " + vp.shape_string() + " vs " +
                                    target.shape_string());
    double acc = 0.0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
        const double d = vp[i] - target[i];
        acc += d * d;
    }
    Node node;
    node.kind = OpKind::mse;
    node.in0 = ip;
    node.requires_grad = nodes_[ip].requires_grad;
    node.target = target;
    node.value = Tensor::scalar(acc / static_cast<double>(vp.size()));
    return push(std::move(node));
}

NodeRef ComputationGraph::softmax_ce(NodeRef logits, std::size_t class_index) {
    const std::size_t labels[] = {class_index};
    const auto il = check(logits);
    if (nodes_[il].value.rows() != 1)
        throw std::invalid_argument("single-label softmax_ce expects one logit row");
    return softmax_ce(logits, labels);
}

NodeRef ComputationGraph::softmax_ce(NodeRef logits, std::span<const std::size_t> labels) {
    const auto il = check(logits);
    const Tensor& z = nodes_[il].value;
    const std::size_t n = z.rows(), k = z.cols();
    if (labels.size() != n)
        throw std::invalid_argument("softmax_ce: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    Node node;
    node.kind = OpKind::softmax_ce;
    node.in0 = il;
    node.requires_grad = nodes_[il].requires_grad;
    node.labels.assign(labels.begin(), labels.end());
    node.cache = Tensor(z.shape());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] >= k)
            throw std::out_of_range("softmax_ce: class index " + std::to_string(labels[r]) +
                                    " out of range for " + std::to_string(k) + " logits");
        double mx = z.at(r, 0);
        for (std::size_t j = 1; j < k; ++j)
            mx = std::max(mx, z.at(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(z.at(r, j) - mx);
            node.cache[r * k + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < k; ++j)
            node.cache[r * k + j] /= sum;
        total += mx + std::log(sum) - z.at(r, labels[r]);
    }
    node.value = Tensor::scalar(total / static_cast<double>(n));
    return push(std::move(node));
}

const Tensor& ComputationGraph::value(NodeRef n) const { return nodes_[check(n)].value; }
OpKind ComputationGraph::kind(NodeRef n) const { return nodes_[check(n)].kind; }
bool ComputationGraph::requires_grad(NodeRef n) const {
    return nodes_[check(n)].requires_grad;
}

const Tensor& ComputationGraph::grad(NodeRef leaf) const { return grads_[check(leaf)]; }

void ComputationGraph::zero_grad() {
    for (auto& g : grads_)
        g = Tensor();
}

void ComputationGraph::propagate(std::size_t i, const Tensor& g,
                                 std::vector<std::optional<Tensor>>& adj) {
    const Node& node = nodes_[i];
    const auto wants = [&](std::size_t j) { return nodes_[j].requires_grad; };
    switch (node.kind) {
    case OpKind::leaf:
        break;
    case OpKind::matmul: {
        const Tensor& a = nodes_[node.in0].value;
        const Tensor& b = nodes_[node.in1].value;
        const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
        if (wants(node.in0))
            kernels::matmul_a_bt_acc(g.values(), b.values(),
                                     slot(adj, node.in0, a.shape()).values(), n, k, m);
        if (wants(node.in1))
            kernels::matmul_at_b_acc(a.values(), g.values(),
                                     slot(adj, node.in1, b.shape()).values(), n, k, m);
        break;
    }
    case OpKind::add:
        if (wants(node.in0))
            accumulate(adj, node.in0, g);
        if (wants(node.in1))
            accumulate(adj, node.in1, g);
        break;
    case OpKind::add_row:
        if (wants(node.in0))
            accumulate(adj, node.in0, g);
        if (wants(node.in1)) {
            const Tensor& b = nodes_[node.in1].value;
            kernels::column_sum_acc(g.values(), slot(adj, node.in1, b.shape()).values(),
                                    g.rows(), g.cols());
        }
        break;
    case OpKind::relu: {
        const Tensor& x = nodes_[node.in0].value;
        Tensor d = g;
        for (std::size_t e = 0; e < d.size(); ++e)
            if (!(x[e] > 0.0))
                d[e] = 0.0;
        accumulate(adj, node.in0, d);
        break;
    }
    case OpKind::tanh: {
        Tensor d = g;
        for (std::size_t e = 0; e < d.size(); ++e)
            d[e] *= 1.0 - node.value[e] * node.value[e];
        accumulate(adj, node.in0, d);
        break;
    }
    case OpKind::scale:
        accumulate(adj, node.in0, node.factor * g);
        break;
    case OpKind::mse: {
        const Tensor& p = nodes_[node.in0].value;
        const double c = 2.0 * g.item() / static_cast<double>(p.size());
        Tensor d(p.shape());
        for (std::size_t e = 0; e < d.size(); ++e)
            d[e] = c * (p[e] - node.target[e]);
        accumulate(adj, node.in0, d);
        break;
    }
    case OpKind::softmax_ce: {
        const Tensor& z = nodes_[node.in0].value;
        const std::size_t n = z.rows(), k = z.cols();
        const double c = g.item() / static_cast<double>(n);
        Tensor d(z.shape());
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < k; ++j)
                d[r * k + j] = c * (node.cache[r * k + j] - (j == node.labels[r] ? 1.0 : 0.0));
        accumulate(adj, node.in0, d);
        break;
    }
    }
}

void ComputationGraph::run_reverse(std::vector<std::optional<Tensor>>& adj,
                                   std::size_t start, std::size_t stop_exclusive) {
    for (std::size_t i = start + 1; i-- > stop_exclusive;) {
        if (!adj[i])
            continue;
        if (nodes_[i].kind == OpKind::leaf) {
            if (nodes_[i].requires_grad) {
                if (grads_[i].empty())
                    grads_[i] = *adj[i];
                else
                    grads_[i] += *adj[i];
            }
        } else {
            propagate(i, *adj[i], adj);
        }
        adj[i].reset();
    }
}

void ComputationGraph::backward(NodeRef from, double seed) {
    const auto i = check(from);
    if (!nodes_[i].value.is_scalar())
        throw std::invalid_argument("backward source must be scalar, got " +
                                    nodes_[i].value.shape_string());
    std::vector<std::optional<Tensor>> adj(i + 1);
    adj[i] = Tensor(nodes_[i].value.shape(), seed);
    run_reverse(adj, i, 0);
}

bool ComputationGraph::is_ancestor(NodeRef ancestor, NodeRef node) const {
    const auto ia = check(ancestor), in = check(node);
    if (ia > in)
        return false;
    std::vector<char> reach(in + 1, 0);
    reach[in] = 1;
    for (std::size_t i = in + 1; i-- > ia;) {
        if (!reach[i])
            continue;
        if (i == ia)
            return true;
        const Node& n = nodes_[i];
        if (n.kind == OpKind::leaf)
            continue;
        reach[n.in0] = 1;
        if (n.kind == OpKind::matmul || n.kind == OpKind::add || n.kind == OpKind::add_row)
            reach[n.in1] = 1;
    }
    return false;
}

Tensor ComputationGraph::backward_to(NodeRef from, NodeRef upto) {
    const auto i = check(from), u = check(upto);
    if (!nodes_[i].value.is_scalar())
        throw std::invalid_argument("backward_to source must be scalar");
    if (!is_ancestor(upto, from))
        throw std::invalid_argument("backward_to target is not an ancestor of the source");
    if (i == u)
        return Tensor(nodes_[i].value.shape(), 1.0);
    std::vector<std::optional<Tensor>> adj(i + 1);
    adj[i] = Tensor(nodes_[i].value.shape(), 1.0);
    run_reverse(adj, i, u + 1);
    // Leaves created before `upto` but consumed downstream of it (none in the
    // encoder/decoder layout) still receive their share.
    for (std::size_t j = 0; j < u; ++j) {
        if (adj[j] && nodes_[j].kind == OpKind::leaf && nodes_[j].requires_grad) {
            if (grads_[j].empty())
                grads_[j] = *adj[j];
            else
                grads_[j] += *adj[j];
        }
    }
    return adj[u] ? std::move(*adj[u]) : Tensor(nodes_[u].value.shape(), 0.0);
}

void ComputationGraph::inject_grad_and_continue(NodeRef at, const Tensor& grad) {
    const auto a = check(at);
    if (!grad.same_shape(nodes_[a].value))
        throw std::invalid_argument("injected gradient shape " + grad.shape_string() +
                                    " does not match node shape " +
                                    nodes_[a].value.shape_string());
    std::vector<std::optional<Tensor>> adj(a + 1);
    adj[a] = grad;
    run_reverse(adj, a, 0);
}

} // namespace ial
