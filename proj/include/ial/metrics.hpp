#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ial/net.hpp"
#include "ial/synth.hpp"

namespace ial {

struct MetricRecord {
    std::string task_id;
    double value = 0.0;
    MetricDirection direction = MetricDirection::lower_better;

    friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

/// Mean signed relative improvement over single-task references, in percent:
/// (100/T) * sum_i (-1)^{l_i} (M_multi - M_single) / M_single, where l_i = 1
/// for lower-is-better metrics so that any improvement counts positive.
double delta_mtl(std::span<const MetricRecord> multi, std::span<const MetricRecord> single);

/// Test-style metrics: MSE for regression tasks, accuracy in percent for
/// classification tasks.
std::vector<MetricRecord> eval_net(const MultiTaskNet& net, const Dataset& data);

/// Per-task training-objective values (MSE / mean cross-entropy) on a split.
std::vector<double> eval_losses(const MultiTaskNet& net, const Dataset& data);

/// Reads metric records from CSV. Accepted rows: `value,direction` or
/// `task,value,direction`; direction is lower/higher (or *_better). A header
/// row and blank lines are skipped.
std::vector<MetricRecord> read_metric_csv(const std::filesystem::path& path);

} // namespace ial
