#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ial/tensor.hpp"

namespace ial {

class ComputationGraph;

/// Handle to a node of the graph that created it.
class NodeRef {
public:
    NodeRef() = default;
    std::size_t index() const { return index_; }
    bool valid() const { return graph_id_ != 0; }
    friend bool operator==(const NodeRef&, const NodeRef&) = default;

private:
    friend class ComputationGraph;
    NodeRef(std::uint64_t graph_id, std::size_t index) : graph_id_(graph_id), index_(index) {}
    std::uint64_t graph_id_ = 0;
    std::size_t index_ = 0;
};

enum class OpKind { leaf, matmul, add, add_row, relu, tanh, scale, mse, softmax_ce };

/// Reverse-mode tape. Nodes are appended in creation order, which is also the
/// topological order; every backward variant walks indices downward.
///
/// Gradients of requires_grad leaves persist across backward calls and
/// accumulate until zero_grad(). Intermediate adjoints are local to a pass.
class ComputationGraph {
public:
    ComputationGraph();
    ComputationGraph(ComputationGraph&&) noexcept = default;
    ComputationGraph& operator=(ComputationGraph&&) noexcept = default;
    ComputationGraph(const ComputationGraph&) = delete;
    ComputationGraph& operator=(const ComputationGraph&) = delete;

    NodeRef leaf(Tensor value, bool requires_grad);

    NodeRef matmul(NodeRef a, NodeRef b);
    /// Same-shape addition, or [n,m] + [m] with the vector broadcast over rows.
    NodeRef add(NodeRef a, NodeRef b);
    NodeRef relu(NodeRef x);
    NodeRef tanh(NodeRef x);
    NodeRef scale(NodeRef x, double factor);

    /// Mean of squared differences over all elements.
    NodeRef mse(NodeRef pred, const Tensor& target);
    /// Cross-entropy of a single logit vector against one class.
    NodeRef softmax_ce(NodeRef logits, std::size_t class_index);
    /// Batch-mean cross-entropy; logits are [n,k], one label per row.
    NodeRef softmax_ce(NodeRef logits, std::span<const std::size_t> labels);

    const Tensor& value(NodeRef n) const;
    OpKind kind(NodeRef n) const;
    bool requires_grad(NodeRef n) const;
    std::size_t size() const { return nodes_.size(); }

    /// Accumulated gradient of a requires_grad leaf; empty tensor if none reached it.
    const Tensor& grad(NodeRef leaf) const;
    void zero_grad();

    void backward(NodeRef from, double seed = 1.0);

    /// Gradient of `from` at `upto`. Only nodes created after `upto` are
    /// traversed, so leaves feeding `upto` keep their gradients untouched.
    Tensor backward_to(NodeRef from, NodeRef upto);

    /// Treats `grad` as dL/d(at) and finishes the reverse pass through the
    /// ancestors of `at`.
    void inject_grad_and_continue(NodeRef at, const Tensor& grad);

    bool is_ancestor(NodeRef ancestor, NodeRef node) const;

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::size_t in0 = 0;
        std::size_t in1 = 0;
        Tensor value;
        bool requires_grad = false;
        double factor = 0.0;          // scale
        Tensor target;                // mse
        std::vector<std::size_t> labels;  // softmax_ce
        Tensor cache;                 // softmax probabilities
    };

    std::size_t check(NodeRef n) const;
    NodeRef push(Node node);
    void run_reverse(std::vector<std::optional<Tensor>>& adj, std::size_t start,
                     std::size_t stop_exclusive);
    void propagate(std::size_t i, const Tensor& g, std::vector<std::optional<Tensor>>& adj);

    std::uint64_t id_;
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

} // namespace ial
