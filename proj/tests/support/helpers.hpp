#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ial/net.hpp"
#include "oracle.hpp"

namespace testing_support {

inline ial::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0) {
    ial::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.values())
        v = u(rng);
    return t;
}

inline ial::TaskSpec regression_task(std::string id, ial::TaskRole role,
                                     std::vector<std::size_t> widths = {1}) {
    return {std::move(id), role, ial::LossKind::mse, ial::MetricDirection::lower_better,
            std::move(widths)};
}

inline ial::TaskSpec classification_task(std::string id, std::size_t classes,
                                         std::vector<std::size_t> hidden = {}) {
    hidden.push_back(classes);
    return {std::move(id), ial::TaskRole::auxiliary, ial::LossKind::softmax_ce,
            ial::MetricDirection::higher_better, std::move(hidden)};
}

/// Batch with targets matching every task of `net`.
inline ial::Batch random_batch(const ial::MultiTaskNet& net, std::size_t n, std::mt19937_64& rng) {
    ial::Batch b;
    b.x = random_tensor({n, net.input_dim()}, rng);
    for (const auto& t : net.tasks()) {
        ial::TaskTargets tt;
        if (t.loss == ial::LossKind::mse) {
            tt.values = random_tensor({n, t.decoder_widths.back()}, rng);
        } else {
            std::uniform_int_distribution<std::size_t> c(0, t.decoder_widths.back() - 1);
            for (std::size_t i = 0; i < n; ++i)
                tt.labels.push_back(c(rng));
        }
        b.y.push_back(std::move(tt));
    }
    return b;
}

/// Copies a one-encoder-layer, linear-decoder net into the oracle's layout.
inline oracle::Params to_oracle(const ial::MultiTaskNet& net) {
    oracle::Params p;
    const auto& enc = net.encoder().at(0);
    p.d = enc.weight.rows();
    p.h = enc.weight.cols();
    p.w1.assign(enc.weight.values().begin(), enc.weight.values().end());
    p.b1.assign(enc.bias.values().begin(), enc.bias.values().end());
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        const auto& dec = net.decoder(t).at(0);
        p.v.emplace_back(dec.weight.values().begin(), dec.weight.values().end());
        p.c.emplace_back(dec.bias.values().begin(), dec.bias.values().end());
        p.eta.push_back(net.eta(t));
    }
    return p;
}

inline std::vector<oracle::TaskData> to_oracle(const ial::MultiTaskNet& net, const ial::Batch& b) {
    std::vector<oracle::TaskData> out;
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        oracle::TaskData d;
        d.outputs = net.tasks()[t].decoder_widths.back();
        d.classification = net.tasks()[t].loss == ial::LossKind::softmax_ce;
        if (d.classification)
            d.labels = b.y[t].labels;
        else
            d.y.assign(b.y[t].values.values().begin(), b.y[t].values.values().end());
        out.push_back(std::move(d));
    }
    return out;
}

/// Largest absolute difference between the net's parameters and the oracle's.
inline double max_param_diff(const ial::MultiTaskNet& net, const oracle::Params& p) {
    double d = 0.0;
    auto cmp = [&d](std::span<const double> a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            d = std::max(d, std::abs(a[i] - b[i]));
    };
    cmp(net.encoder()[0].weight.values(), p.w1);
    cmp(net.encoder()[0].bias.values(), p.b1);
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        cmp(net.decoder(t)[0].weight.values(), p.v[t]);
        cmp(net.decoder(t)[0].bias.values(), p.c[t]);
        d = std::max(d, std::abs(net.eta(t) - p.eta[t]));
    }
    return d;
}

} // namespace testing_support
