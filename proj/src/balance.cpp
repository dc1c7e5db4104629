#include "ial/balance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ial {

namespace {

void require_tasks(std::span<const Tensor> z_grads) {
    if (z_grads.empty())
        throw std::invalid_argument("balancing needs at least one task");
}

/// Sum of w_t * g_t in task order; zero-weight tasks are skipped.
Tensor weighted_sum(std::span<const Tensor> grads, std::span<const double> weights) {
    Tensor out(grads.front().shape(), 0.0);
    for (std::size_t t = 0; t < grads.size(); ++t) {
        if (weights[t] == 0.0)
            continue;
        const Tensor& g = grads[t];
        if (!g.same_shape(out))
            throw std::invalid_argument("shared-feature gradients differ in shape");
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += weights[t] * g[i];
    }
    return out;
}

BalanceOutcome weighted_outcome(std::span<const Tensor> grads, std::vector<double> dec,
                                std::vector<double> enc) {
    BalanceOutcome o;
    o.combined_z_grad = weighted_sum(grads, enc);
    o.decoder_weights = std::move(dec);
    o.encoder_weights = std::move(enc);
    o.normalized_grads.assign(grads.begin(), grads.end());
    return o;
}

std::vector<double> primary_aux_weights(std::size_t tasks, std::size_t primary, double aux) {
    std::vector<double> w(tasks, aux);
    w.at(primary) = 1.0;
    return w;
}

} // namespace

BalanceOutcome uniform(std::span<const double> losses, std::span<const Tensor> z_grads) {
    require_tasks(z_grads);
    (void)losses;
    std::vector<double> ones(z_grads.size(), 1.0);
    return weighted_outcome(z_grads, ones, ones);
}

BalanceOutcome fixed(std::span<const double> losses, std::span<const Tensor> z_grads,
                     std::size_t primary, double aux_weight) {
    require_tasks(z_grads);
    (void)losses;
    if (!(aux_weight >= 0.0) || !std::isfinite(aux_weight))
        throw std::invalid_argument("fixed: auxiliary weight must be finite and >= 0");
    auto w = primary_aux_weights(z_grads.size(), primary, aux_weight);
    return weighted_outcome(z_grads, w, w);
}

UncertaintyWeights uncertainty_weight(std::span<const double> losses,
                                      std::span<const double> sigmas) {
    if (losses.size() != sigmas.size())
        throw std::invalid_argument("uncertainty_weight: one sigma per loss required");
    UncertaintyWeights out;
    for (double s : sigmas) {
        if (!(s > 0.0) || !std::isfinite(s))
            throw std::invalid_argument("uncertainty_weight: sigma must be positive and finite");
        out.weights.push_back(1.0 / (2.0 * s * s));
        out.regularizer += std::log(s);
    }
    return out;
}

double uncertainty_loss(std::span<const double> losses, std::span<const double> sigmas) {
    const auto uw = uncertainty_weight(losses, sigmas);
    double total = uw.regularizer;
    for (std::size_t t = 0; t < losses.size(); ++t)
        total += uw.weights[t] * losses[t];
    return total;
}

double uncertainty_sigma_grad(double loss, double sigma) {
    return -loss / (sigma * sigma * sigma) + 1.0 / sigma;
}

double uncertainty_eta_grad(double loss, double sigma) {
    return uncertainty_sigma_grad(loss, sigma) * sigma / 2.0;
}

std::vector<double> dwa(std::span<const LossPair> history, std::size_t task_count,
                        double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("dwa: temperature must be positive");
    if (history.empty())
        return std::vector<double>(task_count, 1.0);
    if (history.size() != task_count)
        throw std::invalid_argument("dwa: history does not cover every task");
    std::vector<double> r(task_count);
    for (std::size_t t = 0; t < task_count; ++t) {
        const auto [last, before] = history[t];
        if (!(last > 0.0) || !(before > 0.0))
            throw std::invalid_argument("dwa: epoch losses must be positive");
        r[t] = last / before / temperature;
    }
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& v : r) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : r)
        v = static_cast<double>(task_count) * v / sum;
    return r;
}

std::optional<double> cosine(const Tensor& a, const Tensor& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        return std::nullopt;
    return dot(a, b) / (na * nb);
}

GcsResult gcs(std::span<const Tensor> z_grads, std::size_t primary) {
    require_tasks(z_grads);
    const Tensor& pri = z_grads[primary];
    GcsResult res;
    res.degenerate = l2_norm(pri) == 0.0;
    std::vector<double> enc(z_grads.size(), 1.0);
    for (std::size_t t = 0; t < z_grads.size(); ++t) {
        if (t == primary || res.degenerate)
            continue;
        const auto c = cosine(z_grads[t], pri);
        enc[t] = (!c || *c >= 0.0) ? 1.0 : 0.0;
    }
    // g_pri first, then the kept auxiliaries in task order.
    Tensor combined = pri;
    for (std::size_t t = 0; t < z_grads.size(); ++t)
        if (t != primary && enc[t] != 0.0)
            combined += z_grads[t];
    res.outcome.decoder_weights.assign(z_grads.size(), 1.0);
    res.outcome.encoder_weights = std::move(enc);
    res.outcome.normalized_grads.assign(z_grads.begin(), z_grads.end());
    res.outcome.combined_z_grad = std::move(combined);
    return res;
}

BalanceOutcome olaux(std::span<const Tensor> z_grads, std::size_t primary,
                     std::vector<double>& lambdas, double beta) {
    require_tasks(z_grads);
    if (lambdas.size() != z_grads.size())
        throw std::invalid_argument("olaux: one lambda per task required");
    const Tensor& pri = z_grads[primary];
    std::vector<double> enc = lambdas;
    enc[primary] = 1.0;
    Tensor combined = pri;
    for (std::size_t t = 0; t < z_grads.size(); ++t)
        if (t != primary && enc[t] != 0.0)
            for (std::size_t i = 0; i < combined.size(); ++i)
                combined[i] += enc[t] * z_grads[t][i];

    for (std::size_t t = 0; t < z_grads.size(); ++t) {
        if (t == primary)
            continue;
        if (const auto c = cosine(pri, z_grads[t]))
            lambdas[t] = std::max(0.0, lambdas[t] + beta * *c);
    }
    BalanceOutcome o;
    o.decoder_weights = enc;
    o.encoder_weights = std::move(enc);
    o.normalized_grads.assign(z_grads.begin(), z_grads.end());
    o.combined_z_grad = std::move(combined);
    return o;
}

// --- strategies -----------------------------------------------------------

std::vector<double> UniformStrategy::decoder_weights(const StageInput& in) {
    return std::vector<double>(in.z_grads.size(), 1.0);
}

BalanceOutcome UniformStrategy::encoder_balance(const StageInput& in) {
    return uniform(in.losses, in.z_grads);
}

FixedStrategy::FixedStrategy(double aux_weight) : aux_weight_(aux_weight) {
    if (!(aux_weight >= 0.0))
        throw std::invalid_argument("fixed: auxiliary weight must be >= 0");
}

std::vector<double> FixedStrategy::decoder_weights(const StageInput& in) {
    return primary_aux_weights(in.z_grads.size(), in.primary, aux_weight_);
}

BalanceOutcome FixedStrategy::encoder_balance(const StageInput& in) {
    return fixed(in.losses, in.z_grads, in.primary, aux_weight_);
}

std::vector<double> SingleTaskStrategy::decoder_weights(const StageInput& in) {
    std::vector<double> w(in.z_grads.size(), 0.0);
    w.at(task_) = 1.0;
    return w;
}

BalanceOutcome SingleTaskStrategy::encoder_balance(const StageInput& in) {
    auto w = decoder_weights(in);
    return weighted_outcome(in.z_grads, w, w);
}

std::vector<double> UwStrategy::decoder_weights(const StageInput& in) {
    step_weights_ = uncertainty_weight(in.losses, in.sigmas).weights;
    return step_weights_;
}

BalanceOutcome UwStrategy::encoder_balance(const StageInput& in) {
    // The encoder sees the same weighted loss the decoders were trained on.
    if (step_weights_.size() != in.z_grads.size())
        step_weights_ = uncertainty_weight(in.losses, in.sigmas).weights;
    return weighted_outcome(in.z_grads, step_weights_, step_weights_);
}

DwaStrategy::DwaStrategy(double temperature) : temperature_(temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("dwa: temperature must be positive");
}

std::vector<double> DwaStrategy::decoder_weights(const StageInput& in) {
    const std::size_t k = in.z_grads.size();
    if (previous_.size() != k || latest_.size() != k)
        return dwa({}, k, temperature_);
    std::vector<LossPair> hist(k);
    for (std::size_t t = 0; t < k; ++t)
        hist[t] = {latest_[t], previous_[t]};
    return dwa(hist, k, temperature_);
}

BalanceOutcome DwaStrategy::encoder_balance(const StageInput& in) {
    auto w = decoder_weights(in);
    return weighted_outcome(in.z_grads, w, w);
}

void DwaStrategy::end_epoch(std::span<const double> mean_losses) {
    previous_ = std::move(latest_);
    latest_.assign(mean_losses.begin(), mean_losses.end());
}

nlohmann::json DwaStrategy::state() const {
    return {{"temperature", temperature_}, {"loss_e2", previous_}, {"loss_e1", latest_}};
}

std::vector<double> GcsStrategy::decoder_weights(const StageInput& in) {
    return std::vector<double>(in.z_grads.size(), 1.0);
}

BalanceOutcome GcsStrategy::encoder_balance(const StageInput& in) {
    auto res = gcs(in.z_grads, in.primary);
    if (res.degenerate)
        ++degenerate_steps_;
    return std::move(res.outcome);
}

nlohmann::json GcsStrategy::state() const {
    return {{"degenerate_steps", degenerate_steps_}};
}

OlAuxStrategy::OlAuxStrategy(double beta, double initial_lambda)
    : beta_(beta), initial_lambda_(initial_lambda) {
    if (!(initial_lambda >= 0.0))
        throw std::invalid_argument("olaux: initial lambda must be >= 0");
}

void OlAuxStrategy::ensure_state(std::size_t tasks, std::size_t primary) {
    if (lambdas_.size() == tasks)
        return;
    lambdas_.assign(tasks, initial_lambda_);
    lambdas_.at(primary) = 1.0;
}

std::vector<double> OlAuxStrategy::decoder_weights(const StageInput& in) {
    ensure_state(in.z_grads.size(), in.primary);
    auto w = lambdas_;
    w[in.primary] = 1.0;
    return w;
}

BalanceOutcome OlAuxStrategy::encoder_balance(const StageInput& in) {
    ensure_state(in.z_grads.size(), in.primary);
    return olaux(in.z_grads, in.primary, lambdas_, beta_);
}

nlohmann::json OlAuxStrategy::state() const {
    return {{"beta", beta_}, {"lambda", lambdas_}};
}

} // namespace ial
