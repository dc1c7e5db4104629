#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ial/net.hpp"
#include "ial/tensor.hpp"

namespace ial {

struct SynthTask {
    std::string id;
    LossKind kind = LossKind::mse;
    double relatedness = 0.8;      // rho in [0,1]: weight of the common head direction
    double noise_std = 0.1;        // regression label noise
    double corrupt_fraction = 0.0; // share of training labels replaced by junk
    double scale = 1.0;            // regression target scale
    std::size_t classes = 5;       // classification only

    friend bool operator==(const SynthTask&, const SynthTask&) = default;
};

struct SynthConfig {
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t input_dim = 16;
    std::size_t latent_dim = 8;
    std::vector<SynthTask> tasks;
    std::uint64_t seed = 0;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

void validate(const SynthConfig& cfg);

struct Dataset {
    std::string split;
    Tensor x;                            // [n, input_dim]
    std::vector<std::string> task_ids;
    std::vector<LossKind> kinds;
    std::vector<TaskTargets> y;          // aligned with task_ids

    std::size_t size() const { return x.rows(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Draws (train, test) from one generative process:
///   h = tanh(x U) with U having orthonormal columns, x ~ N(0, I)
///   head_t = rho * c + sqrt(1 - rho^2) * p_t   (c common, p_t private, unit)
///   regression:      y = scale * (head_t . h) / sd + N(0, noise_std^2)
///   classification:  y = number of class thresholds below head_t . h, with
///                    thresholds at equal-mass quantiles (an argmax of the
///                    linear scores j * u - sum_{i<=j} theta_i).
/// Corruption touches training labels only.
std::pair<Dataset, Dataset> generate(const SynthConfig& cfg);

/// Writes inputs.csv plus one <task>.csv per task into `dir`.
void export_csv(const Dataset& data, const std::filesystem::path& dir);

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// A named experiment family with its task roles and what it is meant to show.
struct Scenario {
    std::string name;
    SynthConfig synth;
    std::string primary;
    std::vector<std::string> freeze;        // decoders held at initialization
    std::vector<std::string> expectations;  // comparisons the scenario must exhibit
};

inline constexpr std::string_view scenario_names[] = {"standard", "pseudo_noisy",
                                                      "broken_decoder", "many_tasks"};

Scenario scenario(std::string_view name, std::uint64_t seed);

/// TaskSpecs for a network trained on `synth`, with `primary` as the primary task.
std::vector<TaskSpec> task_specs(const SynthConfig& synth, std::string_view primary,
                                 const std::vector<std::size_t>& decoder_hidden);

} // namespace ial
