#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ial/graph.hpp"
#include "ial/tensor.hpp"

namespace ial {

enum class TaskRole { primary, auxiliary };
enum class LossKind { mse, softmax_ce };
enum class MetricDirection { higher_better, lower_better };

struct TaskSpec {
    std::string id;
    TaskRole role = TaskRole::auxiliary;
    LossKind loss = LossKind::mse;
    MetricDirection direction = MetricDirection::lower_better;
    /// Layer sizes after the shared feature; the last entry is the output width.
    std::vector<std::size_t> decoder_widths;

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

std::string_view to_string(TaskRole r);
std::string_view to_string(LossKind k);
std::string_view to_string(MetricDirection d);

/// Affine layer y = x * weight + bias with weight [in, out], bias [out].
struct Layer {
    Tensor weight;
    Tensor bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Regression tasks use `values` ([n, out]); classification tasks use `labels`.
struct TaskTargets {
    Tensor values;
    std::vector<std::size_t> labels;

    friend bool operator==(const TaskTargets&, const TaskTargets&) = default;
};

/// Inputs plus targets aligned with the network's task order.
struct Batch {
    Tensor x;
    std::vector<TaskTargets> y;
};

/// Shared tanh encoder, per-task ReLU decoders, and one log-variance
/// eta_t = ln(sigma_t^2) per task.
class MultiTaskNet {
public:
    MultiTaskNet(std::vector<TaskSpec> tasks, std::vector<Layer> encoder,
                 std::vector<std::vector<Layer>> decoders, std::vector<double> eta);

    const std::vector<TaskSpec>& tasks() const { return tasks_; }
    std::size_t task_count() const { return tasks_.size(); }
    std::size_t index_of(std::string_view task_id) const;
    std::size_t primary_index() const { return primary_; }

    const std::vector<Layer>& encoder() const { return encoder_; }
    const std::vector<Layer>& decoder(std::size_t t) const { return decoders_.at(t); }
    std::vector<Layer>& encoder_mut() { return encoder_; }
    std::vector<Layer>& decoder_mut(std::size_t t) { return decoders_.at(t); }

    double eta(std::size_t t) const { return eta_.at(t); }
    void set_eta(std::size_t t, double v) { eta_.at(t) = v; }
    double sigma(std::size_t t) const;
    double sigma(std::string_view task_id) const { return sigma(index_of(task_id)); }
    std::vector<double> sigmas() const;

    std::size_t input_dim() const { return encoder_.front().weight.rows(); }
    std::size_t feature_dim() const { return encoder_.back().weight.cols(); }

    friend bool operator==(const MultiTaskNet&, const MultiTaskNet&) = default;

private:
    std::vector<TaskSpec> tasks_;
    std::vector<Layer> encoder_;
    std::vector<std::vector<Layer>> decoders_;
    std::vector<double> eta_;
    std::size_t primary_ = 0;
};

/// Decoder-stage weight 1/(2 sigma^2) that every task starts from.
inline constexpr double initial_task_weight = 0.1;

/// `encoder_widths` runs from the input dimension to the shared-feature width.
MultiTaskNet init_net(const std::vector<std::size_t>& encoder_widths,
                      const std::vector<TaskSpec>& tasks, std::uint64_t seed);

struct ForwardPass {
    ComputationGraph graph;
    NodeRef z;
    std::vector<NodeRef> encoder_leaves;               // weight, bias per layer
    std::vector<std::vector<NodeRef>> decoder_leaves;  // per task, weight, bias per layer
    std::vector<NodeRef> outputs;
    std::vector<NodeRef> losses;

    double loss(std::size_t t) const { return graph.value(losses.at(t)).item(); }
};

ForwardPass forward(const MultiTaskNet& net, const Batch& batch);

/// Task outputs without building a tape.
std::vector<Tensor> predict(const MultiTaskNet& net, const Tensor& x);

/// Runs one backward_to per task: returns dL_t/dz for every task and leaves
/// each task's raw decoder gradients accumulated on the tape.
std::vector<Tensor> capture_feature_grads(ForwardPass& fp);

/// Empty entries mean "no update" for that parameter group.
struct ParamGrads {
    std::vector<Layer> encoder;
    std::vector<std::vector<Layer>> decoders;
    std::vector<std::optional<double>> eta;

    static ParamGrads empty_for(const MultiTaskNet& net);
};

/// Reads (weight, bias) leaf gradients off a tape, multiplied by `scale`.
/// Leaves no gradient reached read as zero.
std::vector<Layer> collect_layers(const ForwardPass& fp, const std::vector<NodeRef>& leaves,
                                  const std::vector<Layer>& like, double scale = 1.0);

struct StepSizes {
    double params = 0.0;
    double eta = 0.0;
};

/// Plain gradient descent. Decoders of frozen tasks keep their parameters;
/// their eta still moves.
void apply_gradients(MultiTaskNet& net, const ParamGrads& grads, StepSizes lr,
                     const std::set<std::string>& freeze = {});

nlohmann::json to_json(const MultiTaskNet& net);
/// Overwrites the parameters of `net`; the snapshot must match its architecture.
void load_parameters(MultiTaskNet& net, const nlohmann::json& snapshot);

} // namespace ial
