#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ial/tensor.hpp"

namespace ial {

/// Per-step weights and the combined gradient at the shared feature z.
struct BalanceOutcome {
    std::vector<double> decoder_weights;
    std::vector<double> encoder_weights;
    std::vector<Tensor> normalized_grads;  // dL_t/dz after the strategy's transform, before weighting
    Tensor combined_z_grad;
};

/// What a strategy sees at one stage of a training step. `sigmas` is the
/// current homoscedastic sigma of every task at the time of the call.
struct StageInput {
    std::span<const double> losses;
    std::span<const Tensor> z_grads;
    std::span<const double> sigmas;
    std::size_t primary = 0;
};

// Baseline combination rules on shared-feature gradients.

BalanceOutcome uniform(std::span<const double> losses, std::span<const Tensor> z_grads);
BalanceOutcome fixed(std::span<const double> losses, std::span<const Tensor> z_grads,
                     std::size_t primary, double aux_weight);

struct UncertaintyWeights {
    std::vector<double> weights;  // 1 / (2 sigma_t^2)
    double regularizer = 0.0;     // sum_t log sigma_t
};
UncertaintyWeights uncertainty_weight(std::span<const double> losses,
                                      std::span<const double> sigmas);

/// sum_t L_t / (2 sigma_t^2) + log sigma_t
double uncertainty_loss(std::span<const double> losses, std::span<const double> sigmas);
/// d/dsigma of one task's term: -L / sigma^3 + 1 / sigma.
double uncertainty_sigma_grad(double loss, double sigma);
/// Same derivative with respect to eta = ln sigma^2 (dsigma/deta = sigma / 2).
double uncertainty_eta_grad(double loss, double sigma);

/// Epoch-mean losses of the two most recent epochs: {L(e-1), L(e-2)}.
using LossPair = std::array<double, 2>;
/// Returns K * softmax(r / T) with r_t = L_t(e-1) / L_t(e-2); uniform when
/// `history` is empty (fewer than two finished epochs).
std::vector<double> dwa(std::span<const LossPair> history, std::size_t task_count,
                        double temperature);

struct GcsResult {
    BalanceOutcome outcome;
    bool degenerate = false;  // zero primary gradient; every auxiliary kept
};
GcsResult gcs(std::span<const Tensor> z_grads, std::size_t primary);

/// Cosine similarity; nullopt when either vector has zero norm.
std::optional<double> cosine(const Tensor& a, const Tensor& b);

/// One OL-AUX step: combine with the current lambdas, then move every
/// auxiliary lambda by beta * cos(g_pri, g_aux), clamped at zero.
BalanceOutcome olaux(std::span<const Tensor> z_grads, std::size_t primary,
                     std::vector<double>& lambdas, double beta);

/// A balancing strategy plugged into the generic two-stage training step.
/// decoder_weights() is called before the decoder/eta update and
/// encoder_balance() after it.
class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;
    /// True when the decoder stage also trains eta with the uncertainty loss.
    virtual bool learns_uncertainty() const { return false; }
    virtual std::vector<double> decoder_weights(const StageInput& in) = 0;
    virtual BalanceOutcome encoder_balance(const StageInput& in) = 0;
    /// Epoch-mean training losses, in task order.
    virtual void end_epoch(std::span<const double> /*mean_losses*/) {}
    virtual nlohmann::json state() const { return nlohmann::json::object(); }
};

class UniformStrategy final : public Strategy {
public:
    std::string name() const override { return "uniform"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;
};

class FixedStrategy final : public Strategy {
public:
    explicit FixedStrategy(double aux_weight = 0.1);
    std::string name() const override { return "fixed"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;

private:
    double aux_weight_;
};

/// Trains only one task: weight 1 for it, 0 for every other task in both stages.
class SingleTaskStrategy final : public Strategy {
public:
    explicit SingleTaskStrategy(std::size_t task) : task_(task) {}
    std::string name() const override { return "single"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;

private:
    std::size_t task_;
};

/// Homoscedastic uncertainty weighting applied to the whole network.
class UwStrategy final : public Strategy {
public:
    std::string name() const override { return "uw"; }
    bool learns_uncertainty() const override { return true; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;

private:
    std::vector<double> step_weights_;
};

class DwaStrategy final : public Strategy {
public:
    explicit DwaStrategy(double temperature = 2.0);
    std::string name() const override { return "dwa"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;
    void end_epoch(std::span<const double> mean_losses) override;
    nlohmann::json state() const override;

private:
    double temperature_;
    std::vector<double> previous_;  // L(e-2)
    std::vector<double> latest_;    // L(e-1)
};

class GcsStrategy final : public Strategy {
public:
    std::string name() const override { return "gcs"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;
    std::size_t degenerate_steps() const { return degenerate_steps_; }
    nlohmann::json state() const override;

private:
    std::size_t degenerate_steps_ = 0;
};

class OlAuxStrategy final : public Strategy {
public:
    explicit OlAuxStrategy(double beta = 0.05, double initial_lambda = 0.1);
    std::string name() const override { return "olaux"; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;
    nlohmann::json state() const override;
    const std::vector<double>& lambdas() const { return lambdas_; }

private:
    void ensure_state(std::size_t tasks, std::size_t primary);
    double beta_;
    double initial_lambda_;
    std::vector<double> lambdas_;
};

inline constexpr std::array<std::string_view, 8> strategy_names = {
    "uniform", "fixed", "uw", "dwa", "gcs", "olaux", "ial", "single"};

/// Case-insensitive lookup. `params` carries strategy hyperparameters; the
/// "single" strategy needs `task_index`. Throws std::invalid_argument listing
/// the supported names for anything else.
std::unique_ptr<Strategy> make_strategy(std::string_view name,
                                        const nlohmann::json& params = nlohmann::json::object());

} // namespace ial
