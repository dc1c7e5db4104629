#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ial/balance.hpp"
#include "ial/ial.hpp"
#include "ial/net.hpp"
#include "ial/synth.hpp"

namespace ial {

/// Two-stage step for any strategy: forward, per-task dL/dz capture, decoder
/// (and eta) update with the strategy's decoder weights, then the encoder
/// update from the strategy's combined dL/dz.
StepReport train_step(MultiTaskNet& net, const Batch& batch, Strategy& strategy, StepSizes lr,
                      const std::set<std::string>& freeze = {});

/// Means over the steps of one epoch.
struct EpochStats {
    std::vector<double> mean_losses;
    std::vector<double> mean_z_grad_norms;
    std::vector<double> mean_scaled_grad_norms;
    std::vector<double> last_decoder_weights;
    std::vector<double> last_encoder_weights;
    std::size_t steps = 0;
};

/// One shuffled pass over `data` in mini-batches (the last batch may be short).
/// Calls strategy.end_epoch with the mean training losses.
EpochStats train_epoch(MultiTaskNet& net, const Dataset& data, Strategy& strategy,
                       StepSizes lr, std::size_t batch_size, std::mt19937_64& rng,
                       const std::set<std::string>& freeze = {});

Batch gather(const Dataset& data, std::span<const std::size_t> rows);

} // namespace ial
