#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ial/balance.hpp"
#include "ial/net.hpp"

namespace ial {

/// Map from an auxiliary task's sigma to its encoder-stage weight.
enum class WeightMap {
    clamp,     // min(cap, max(0, 1 - sigma))
    softplus,  // min(cap, softplus(1 - sigma) / softplus(1))
};

/// Source of the auxiliary encoder weights. `uncertainty` is the full method;
/// the others replace it for ablations while the decoder stage stays the same.
enum class AuxWeighting { uncertainty, fixed, rts, cosine };

struct IalConfig {
    double lr_params = 0.05;
    double lr_eta = 0.025;
    WeightMap g_map = WeightMap::clamp;
    double weight_cap = 1.0;
    /// Rescale every auxiliary dL/dz to the primary gradient's norm.
    bool normalize = true;
    AuxWeighting weighting = AuxWeighting::uncertainty;
    double fixed_aux_weight = 0.1;
    double rts_temperature = 2.0;

    StepSizes step_sizes() const { return {lr_params, lr_eta}; }
};

/// Reads an IalConfig from strategy parameters. Recognised keys: lr_params,
/// lr_eta, g_map ("clamp" | "softplus"), weight_cap, normalize, weighting
/// ("uncertainty" | "fixed" | "rts" | "cosine"), fixed_aux_weight,
/// rts_temperature, and `variant`: "full", "grad_only" (normalization with
/// fixed weights) or "uncertainty_only" (uncertainty weights, no normalization).
IalConfig ial_config_from_json(const nlohmann::json& params);
nlohmann::json to_json(const IalConfig& cfg);

double f_weight(double sigma, const IalConfig& cfg);

/// (|g_pri| / |g_aux|) * g_aux. A zero g_aux is returned unchanged and a zero
/// g_pri gives a zero tensor.
Tensor normalize_aux_grad(const Tensor& g_aux, const Tensor& g_pri);

/// Per-task diagnostics of one training step.
struct StepReport {
    std::vector<double> losses;
    std::vector<double> sigmas;            // after the decoder-stage update
    std::vector<double> decoder_weights;
    std::vector<double> encoder_weights;   // f(sigma_t); exactly 1 for the primary
    std::vector<double> z_grad_norms;      // |dL_t/dz|
    std::vector<double> scaled_grad_norms; // after normalization, before weighting
    double encoder_grad_norm = 0.0;

    friend bool operator==(const StepReport&, const StepReport&) = default;
};

struct DecoderStageResult {
    ParamGrads grads;              // decoders and eta only
    std::vector<double> losses;
    std::vector<Tensor> z_grads;   // dL_t/dz captured on the way
    std::vector<double> weights;   // 1 / (2 sigma_t^2), pre-update sigma
};

/// Impartial decoder stage: every task, primary or auxiliary, gets
/// decoder gradient (1/(2 sigma_t^2)) dL_t/dtheta_t and an eta gradient from
/// its own loss only.
DecoderStageResult decoder_stage(ForwardPass& fp, const MultiTaskNet& net);

/// Primary-dominant combination of shared-feature gradients:
/// g_pri + sum_aux w_t * Norm(g_t).
BalanceOutcome combine_feature_grads(std::span<const Tensor> z_grads,
                                     std::span<const double> sigmas, std::size_t primary,
                                     const IalConfig& cfg,
                                     std::span<const double> aux_weight_override = {});

struct EncoderStageResult {
    std::vector<Layer> encoder_grads;
    BalanceOutcome balance;
};

/// Encoder stage from already captured per-task dL/dz.
EncoderStageResult encoder_stage(ForwardPass& fp, std::span<const Tensor> z_grads,
                                 std::span<const double> sigmas, std::size_t primary,
                                 const IalConfig& cfg);
/// Encoder stage that captures dL/dz itself.
EncoderStageResult encoder_stage(ForwardPass& fp, const MultiTaskNet& net,
                                 std::span<const double> sigmas, const IalConfig& cfg);

/// One full step: forward, decoder stage and its update, then the encoder
/// stage with the updated sigmas and its update.
StepReport train_step(MultiTaskNet& net, const Batch& batch, const IalConfig& cfg,
                      const std::set<std::string>& freeze = {});

/// The IAL encoder/decoder rules exposed through the Strategy interface.
class IalStrategy final : public Strategy {
public:
    explicit IalStrategy(IalConfig cfg = {});
    std::string name() const override { return "ial"; }
    bool learns_uncertainty() const override { return true; }
    std::vector<double> decoder_weights(const StageInput& in) override;
    BalanceOutcome encoder_balance(const StageInput& in) override;
    void end_epoch(std::span<const double> mean_losses) override;
    nlohmann::json state() const override;
    const IalConfig& config() const { return cfg_; }

private:
    IalConfig cfg_;
    std::vector<double> previous_;
    std::vector<double> latest_;
};

} // namespace ial
