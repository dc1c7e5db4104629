#include "ial/ial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ial {

namespace {

double softplus(double y) { return y > 30.0 ? y : std::log1p(std::exp(y)); }

WeightMap parse_map(const std::string& s) {
    if (s == "clamp")
        return WeightMap::clamp;
    if (s == "softplus")
        return WeightMap::softplus;
    throw std::invalid_argument("unknown g_map '" + s + "' (expected clamp or softplus)");
}

AuxWeighting parse_weighting(const std::string& s) {
    if (s == "uncertainty")
        return AuxWeighting::uncertainty;
    if (s == "fixed")
        return AuxWeighting::fixed;
    if (s == "rts")
        return AuxWeighting::rts;
    if (s == "cosine")
        return AuxWeighting::cosine;
    throw std::invalid_argument("unknown weighting '" + s +
                                "' (expected uncertainty, fixed, rts or cosine)");
}

const char* weighting_name(AuxWeighting w) {
    switch (w) {
    case AuxWeighting::uncertainty: return "uncertainty";
    case AuxWeighting::fixed: return "fixed";
    case AuxWeighting::rts: return "rts";
    case AuxWeighting::cosine: return "cosine";
    }
    return "?";
}

double norm_of_layers(const std::vector<Layer>& layers) {
    double acc = 0.0;
    for (const auto& l : layers)
        acc += dot(l.weight, l.weight) + dot(l.bias, l.bias);
    return std::sqrt(acc);
}

} // namespace

IalConfig ial_config_from_json(const nlohmann::json& params) {
    IalConfig cfg;
    if (params.is_null())
        return cfg;
    if (!params.is_object())
        throw std::invalid_argument("ial parameters must be a JSON object");
    const std::string variant = params.value("variant", std::string("full"));
    if (variant == "grad_only") {
        cfg.normalize = true;
        cfg.weighting = AuxWeighting::fixed;
    } else if (variant == "uncertainty_only") {
        cfg.normalize = false;
        cfg.weighting = AuxWeighting::uncertainty;
    } else if (variant != "full") {
        throw std::invalid_argument("unknown ial variant '" + variant +
                                    "' (expected full, grad_only or uncertainty_only)");
    }
    cfg.lr_params = params.value("lr_params", cfg.lr_params);
    cfg.lr_eta = params.value("lr_eta", cfg.lr_eta);
    if (params.contains("g_map"))
        cfg.g_map = parse_map(params.at("g_map").get<std::string>());
    cfg.weight_cap = params.value("weight_cap", cfg.weight_cap);
    cfg.normalize = params.value("normalize", cfg.normalize);
    if (params.contains("weighting"))
        cfg.weighting = parse_weighting(params.at("weighting").get<std::string>());
    cfg.fixed_aux_weight = params.value("fixed_aux_weight", cfg.fixed_aux_weight);
    cfg.rts_temperature = params.value("rts_temperature", cfg.rts_temperature);

    if (!(cfg.lr_params > 0.0) || !(cfg.lr_eta > 0.0))
        throw std::invalid_argument("ial learning rates must be positive");
    if (!(cfg.weight_cap > 0.0))
        throw std::invalid_argument("ial weight_cap must be positive");
    if (!(cfg.fixed_aux_weight >= 0.0))
        throw std::invalid_argument("ial fixed_aux_weight must be >= 0");
    return cfg;
}

nlohmann::json to_json(const IalConfig& cfg) {
    return {{"lr_params", cfg.lr_params},
            {"lr_eta", cfg.lr_eta},
            {"g_map", cfg.g_map == WeightMap::clamp ? "clamp" : "softplus"},
            {"weight_cap", cfg.weight_cap},
            {"normalize", cfg.normalize},
            {"weighting", weighting_name(cfg.weighting)},
            {"fixed_aux_weight", cfg.fixed_aux_weight},
            {"rts_temperature", cfg.rts_temperature}};
}

double f_weight(double sigma, const IalConfig& cfg) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("f_weight: sigma must be positive");
    const double y = 1.0 - sigma;
    const double g = cfg.g_map == WeightMap::clamp ? std::max(0.0, y)
                                                   : softplus(y) / softplus(1.0);
    return std::min(cfg.weight_cap, g);
}

Tensor normalize_aux_grad(const Tensor& g_aux, const Tensor& g_pri) {
    if (!g_aux.same_shape(g_pri))
        throw std::invalid_argument("normalize_aux_grad: shape mismatch");
    const double na = l2_norm(g_aux);
    if (na == 0.0)
        return g_aux;
    const double np = l2_norm(g_pri);
    if (np == 0.0)
        return Tensor(g_aux.shape(), 0.0);
    return (np / na) * g_aux;
}

BalanceOutcome combine_feature_grads(std::span<const Tensor> z_grads,
                                     std::span<const double> sigmas, std::size_t primary,
                                     const IalConfig& cfg,
                                     std::span<const double> aux_weight_override) {
    const std::size_t k = z_grads.size();
    if (k == 0 || sigmas.size() != k || primary >= k)
        throw std::invalid_argument("combine_feature_grads: inconsistent task count");
    const Tensor& pri = z_grads[primary];

    BalanceOutcome o;
    o.encoder_weights.assign(k, 0.0);
    o.normalized_grads.resize(k);
    o.encoder_weights[primary] = 1.0;
    o.normalized_grads[primary] = pri;
    o.combined_z_grad = pri;
    for (std::size_t t = 0; t < k; ++t) {
        if (t == primary)
            continue;
        double w = 0.0;
        switch (cfg.weighting) {
        case AuxWeighting::uncertainty:
            w = f_weight(sigmas[t], cfg);
            break;
        case AuxWeighting::fixed:
            w = std::min(cfg.weight_cap, cfg.fixed_aux_weight);
            break;
        case AuxWeighting::rts:
            w = std::min(cfg.weight_cap, aux_weight_override.empty() ? 1.0
                                                                     : aux_weight_override[t]);
            break;
        case AuxWeighting::cosine: {
            const auto c = cosine(z_grads[t], pri);
            w = std::min(cfg.weight_cap, c ? std::max(0.0, *c) : 0.0);
            break;
        }
        }
        o.encoder_weights[t] = w;
        o.normalized_grads[t] = cfg.normalize ? normalize_aux_grad(z_grads[t], pri) : z_grads[t];
        if (w == 0.0)
            continue;
        const Tensor& n = o.normalized_grads[t];
        for (std::size_t i = 0; i < n.size(); ++i)
            o.combined_z_grad[i] += w * n[i];
    }
    return o;
}

DecoderStageResult decoder_stage(ForwardPass& fp, const MultiTaskNet& net) {
    DecoderStageResult r;
    r.z_grads = capture_feature_grads(fp);
    const std::size_t k = net.task_count();
    for (std::size_t t = 0; t < k; ++t)
        r.losses.push_back(fp.loss(t));
    const auto sigmas = net.sigmas();
    r.weights = uncertainty_weight(r.losses, sigmas).weights;
    r.grads = ParamGrads::empty_for(net);
    for (std::size_t t = 0; t < k; ++t) {
        r.grads.decoders[t] =
            collect_layers(fp, fp.decoder_leaves[t], net.decoder(t), r.weights[t]);
        r.grads.eta[t] = uncertainty_eta_grad(r.losses[t], sigmas[t]);
    }
    return r;
}

EncoderStageResult encoder_stage(ForwardPass& fp, std::span<const Tensor> z_grads,
                                 std::span<const double> sigmas, std::size_t primary,
                                 const IalConfig& cfg) {
    EncoderStageResult r;
    r.balance = combine_feature_grads(z_grads, sigmas, primary, cfg);
    fp.graph.inject_grad_and_continue(fp.z, r.balance.combined_z_grad);
    std::vector<Layer> like;
    for (std::size_t i = 0; i < fp.encoder_leaves.size(); i += 2) {
        const Tensor& w = fp.graph.value(fp.encoder_leaves[i]);
        const Tensor& b = fp.graph.value(fp.encoder_leaves[i + 1]);
        like.push_back({Tensor(w.shape()), Tensor(b.shape())});
    }
    r.encoder_grads = collect_layers(fp, fp.encoder_leaves, like);
    return r;
}

EncoderStageResult encoder_stage(ForwardPass& fp, const MultiTaskNet& net,
                                 std::span<const double> sigmas, const IalConfig& cfg) {
    const auto z_grads = capture_feature_grads(fp);
    return encoder_stage(fp, z_grads, sigmas, net.primary_index(), cfg);
}

StepReport train_step(MultiTaskNet& net, const Batch& batch, const IalConfig& cfg,
                      const std::set<std::string>& freeze) {
    ForwardPass fp = forward(net, batch);

    auto dec = decoder_stage(fp, net);
    apply_gradients(net, dec.grads, cfg.step_sizes(), freeze);

    const auto sigmas = net.sigmas();
    auto enc = encoder_stage(fp, dec.z_grads, sigmas, net.primary_index(), cfg);
    ParamGrads eg;
    eg.encoder = enc.encoder_grads;
    apply_gradients(net, eg, cfg.step_sizes());

    StepReport rep;
    rep.losses = std::move(dec.losses);
    rep.sigmas = sigmas;
    rep.decoder_weights = std::move(dec.weights);
    rep.encoder_weights = enc.balance.encoder_weights;
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        rep.z_grad_norms.push_back(l2_norm(dec.z_grads[t]));
        rep.scaled_grad_norms.push_back(l2_norm(enc.balance.normalized_grads[t]));
    }
    rep.encoder_grad_norm = norm_of_layers(enc.encoder_grads);
    return rep;
}

IalStrategy::IalStrategy(IalConfig cfg) : cfg_(cfg) {}

std::vector<double> IalStrategy::decoder_weights(const StageInput& in) {
    return uncertainty_weight(in.losses, in.sigmas).weights;
}

BalanceOutcome IalStrategy::encoder_balance(const StageInput& in) {
    std::vector<double> rts;
    if (cfg_.weighting == AuxWeighting::rts && latest_.size() == in.z_grads.size() &&
        previous_.size() == in.z_grads.size()) {
        std::vector<LossPair> hist(latest_.size());
        for (std::size_t t = 0; t < hist.size(); ++t)
            hist[t] = {latest_[t], previous_[t]};
        rts = dwa(hist, hist.size(), cfg_.rts_temperature);
    }
    return combine_feature_grads(in.z_grads, in.sigmas, in.primary, cfg_, rts);
}

void IalStrategy::end_epoch(std::span<const double> mean_losses) {
    previous_ = std::move(latest_);
    latest_.assign(mean_losses.begin(), mean_losses.end());
}

nlohmann::json IalStrategy::state() const { return {{"config", to_json(cfg_)}}; }

} // namespace ial
