#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ial/metrics.hpp"
#include "ial/synth.hpp"

namespace ial {

inline constexpr const char* run_csv_schema = "ialrun-v1";
inline constexpr const char* summary_schema = "ialrun-summary-v1";

struct RunConfig {
    std::string scenario = "standard";
    std::optional<SynthConfig> synth;  // replaces the scenario's data settings; seed is overridden per run
    std::string strategy = "ial";
    nlohmann::json strategy_params = nlohmann::json::object();
    std::string label;                 // output directory name; defaults to the strategy name
    std::string primary;               // defaults to the scenario's primary
    std::optional<std::vector<std::string>> freeze;  // defaults to the scenario's freeze list
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double lr_params = 0.05;
    double lr_eta = 0.025;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<std::size_t> encoder_hidden = {32};
    std::size_t feature_dim = 4;
    std::vector<std::size_t> decoder_hidden = {8};
    std::filesystem::path out = "runs";

    std::string effective_label() const { return label.empty() ? strategy : label; }
};

/// Parses a run configuration; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
/// Throws std::invalid_argument when the configuration cannot run.
void validate(const RunConfig& cfg);

/// One per-epoch row. Epoch 0 is the untrained evaluation (its step
/// statistics are zero).
struct EpochRow {
    std::size_t epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> test_metric;
    std::vector<double> sigma;
    std::vector<double> f_sigma;
    std::vector<double> decoder_weight;
    std::vector<double> encoder_weight;
    std::vector<double> z_grad_norm;
    std::vector<double> scaled_grad_norm;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<EpochRow> rows;
};

struct RunResult {
    RunConfig config;
    std::vector<TaskSpec> tasks;
    std::vector<SeedResult> seeds;
};

/// Trains every seed (seeds run concurrently) and returns the logs in memory.
RunResult execute(const RunConfig& cfg);

/// Summary derived only from the per-epoch rows.
nlohmann::json summarize(const RunResult& result);

/// Writes <out>/<label>/seed<k>.csv and <out>/<label>/summary.json.
void write_outputs(const RunResult& result, const std::filesystem::path& out_root);

/// execute + write_outputs into cfg.out (or $IAL_OUT when set).
nlohmann::json run(const RunConfig& cfg);

std::string format_run_csv(const RunResult& result, std::size_t seed_index);

/// Output root honouring the IAL_OUT environment override.
std::filesystem::path output_root(const RunConfig& cfg);

/// Rows of the strategy comparison table.
struct ComparisonRow {
    std::string label;
    std::vector<double> mean;  // per task
    std::vector<double> std;
    double delta_mtl = 0.0;
};

struct Comparison {
    std::vector<TaskSpec> tasks;
    std::vector<ComparisonRow> rows;  // "single" reference first, then config order

    std::string csv() const;
    std::string text() const;
};

/// Runs every config plus one single-task reference per task (each task
/// trained alone, all other weights zero) and tabulates mean final metrics and
/// delta-MTL against those references.
Comparison compare(const std::vector<RunConfig>& cfgs, bool write_runs = true);

/// Expands a compare document: either an array of run configs or
/// {"base": {...}, "strategies": [{...overrides...}, ...]}.
std::vector<RunConfig> compare_configs_from_json(const nlohmann::json& j);

/// Index of the last-quarter rows used for f(sigma) averages.
std::size_t last_quarter_start(std::size_t epochs);

} // namespace ial
