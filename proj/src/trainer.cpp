#include "ial/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ial {

StepReport train_step(MultiTaskNet& net, const Batch& batch, Strategy& strategy, StepSizes lr,
                      const std::set<std::string>& freeze) {
    ForwardPass fp = forward(net, batch);
    const std::size_t k = net.task_count();
    const auto z_grads = capture_feature_grads(fp);
    std::vector<double> losses(k);
    for (std::size_t t = 0; t < k; ++t)
        losses[t] = fp.loss(t);

    const auto sigmas_before = net.sigmas();
    const auto dec_w =
        strategy.decoder_weights({losses, z_grads, sigmas_before, net.primary_index()});
    if (dec_w.size() != k)
        throw std::logic_error("strategy returned the wrong number of decoder weights");

    ParamGrads dg = ParamGrads::empty_for(net);
    for (std::size_t t = 0; t < k; ++t) {
        if (dec_w[t] != 0.0)
            dg.decoders[t] = collect_layers(fp, fp.decoder_leaves[t], net.decoder(t), dec_w[t]);
        if (strategy.learns_uncertainty())
            dg.eta[t] = uncertainty_eta_grad(losses[t], sigmas_before[t]);
    }
    apply_gradients(net, dg, lr, freeze);

    const auto sigmas_after = net.sigmas();
    BalanceOutcome bal =
        strategy.encoder_balance({losses, z_grads, sigmas_after, net.primary_index()});
    fp.graph.inject_grad_and_continue(fp.z, bal.combined_z_grad);
    std::vector<Layer> enc = collect_layers(fp, fp.encoder_leaves, net.encoder());
    ParamGrads eg;
    eg.encoder = enc;
    apply_gradients(net, eg, lr);

    StepReport rep;
    rep.losses = std::move(losses);
    rep.sigmas = sigmas_after;
    rep.decoder_weights = dec_w;
    rep.encoder_weights = bal.encoder_weights;
    double enc_sq = 0.0;
    for (const auto& l : enc)
        enc_sq += dot(l.weight, l.weight) + dot(l.bias, l.bias);
    for (std::size_t t = 0; t < k; ++t) {
        rep.z_grad_norms.push_back(l2_norm(z_grads[t]));
        rep.scaled_grad_norms.push_back(l2_norm(bal.normalized_grads[t]));
    }
    rep.encoder_grad_norm = std::sqrt(enc_sq);
    return rep;
}

Batch gather(const Dataset& data, std::span<const std::size_t> rows) {
    const std::size_t n = rows.size(), d = data.x.cols();
    Batch b;
    b.x = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(data.x.values().begin() + rows[i] * d, d, &b.x.at(i, 0));
    for (std::size_t t = 0; t < data.y.size(); ++t) {
        TaskTargets tt;
        if (data.kinds[t] == LossKind::mse) {
            const Tensor& v = data.y[t].values;
            const std::size_t c = v.cols();
            tt.values = Tensor({n, c});
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(v.values().begin() + rows[i] * c, c, &tt.values.at(i, 0));
        } else {
            tt.labels.reserve(n);
            for (auto r : rows)
                tt.labels.push_back(data.y[t].labels[r]);
        }
        b.y.push_back(std::move(tt));
    }
    return b;
}

EpochStats train_epoch(MultiTaskNet& net, const Dataset& data, Strategy& strategy,
                       StepSizes lr, std::size_t batch_size, std::mt19937_64& rng,
                       const std::set<std::string>& freeze) {
    if (batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    const std::size_t k = net.task_count();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats st;
    st.mean_losses.assign(k, 0.0);
    st.mean_z_grad_norms.assign(k, 0.0);
    st.mean_scaled_grad_norms.assign(k, 0.0);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        const Batch b = gather(data, std::span(order).subspan(start, len));
        const StepReport rep = train_step(net, b, strategy, lr, freeze);
        for (std::size_t t = 0; t < k; ++t) {
            st.mean_losses[t] += rep.losses[t];
            st.mean_z_grad_norms[t] += rep.z_grad_norms[t];
            st.mean_scaled_grad_norms[t] += rep.scaled_grad_norms[t];
        }
        st.last_decoder_weights = rep.decoder_weights;
        st.last_encoder_weights = rep.encoder_weights;
        ++st.steps;
    }
    if (st.steps > 0) {
        const double inv = 1.0 / static_cast<double>(st.steps);
        for (std::size_t t = 0; t < k; ++t) {
            st.mean_losses[t] *= inv;
            st.mean_z_grad_norms[t] *= inv;
            st.mean_scaled_grad_norms[t] *= inv;
        }
    }
    strategy.end_epoch(st.mean_losses);
    return st;
}

} // namespace ial
