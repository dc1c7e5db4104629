#include "ial/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ial {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<MetricDirection> parse_direction(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "lower" || s == "lower_better" || s == "lower_is_better" || s == "min")
        return MetricDirection::lower_better;
    if (s == "higher" || s == "higher_better" || s == "higher_is_better" || s == "max")
        return MetricDirection::higher_better;
    return std::nullopt;
}

std::optional<double> parse_number(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size())
            return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace

double delta_mtl(std::span<const MetricRecord> multi, std::span<const MetricRecord> single) {
    if (multi.empty() || multi.size() != single.size())
        throw std::invalid_argument("delta_mtl: record lists must be non-empty and equally long");
    double acc = 0.0;
    for (std::size_t i = 0; i < multi.size(); ++i) {
        if (multi[i].direction != single[i].direction)
            throw std::invalid_argument("delta_mtl: direction mismatch at position " +
                                        std::to_string(i));
        if (single[i].value == 0.0)
            throw std::invalid_argument("delta_mtl: zero single-task reference at position " +
                                        std::to_string(i));
        const double rel = (multi[i].value - single[i].value) / single[i].value;
        acc += multi[i].direction == MetricDirection::lower_better ? -rel : rel;
    }
    return 100.0 * acc / static_cast<double>(multi.size());
}

std::vector<MetricRecord> eval_net(const MultiTaskNet& net, const Dataset& data) {
    if (data.size() == 0)
        throw std::invalid_argument("eval_net: empty split");
    if (data.y.size() != net.task_count())
        throw std::invalid_argument("eval_net: dataset tasks do not match the network");
    const auto outs = predict(net, data.x);
    std::vector<MetricRecord> recs;
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        const auto& spec = net.tasks()[t];
        const Tensor& o = outs[t];
        MetricRecord r{spec.id, 0.0, spec.direction};
        if (spec.loss == LossKind::mse) {
            const Tensor& y = data.y[t].values;
            double acc = 0.0;
            for (std::size_t i = 0; i < o.size(); ++i)
                acc += (o[i] - y[i]) * (o[i] - y[i]);
            r.value = acc / static_cast<double>(o.size());
        } else {
            std::size_t hits = 0;
            for (std::size_t row = 0; row < o.rows(); ++row) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < o.cols(); ++j)
                    if (o.at(row, j) > o.at(row, best))
                        best = j;
                hits += best == data.y[t].labels[row] ? 1 : 0;
            }
            r.value = 100.0 * static_cast<double>(hits) / static_cast<double>(o.rows());
        }
        recs.push_back(std::move(r));
    }
    return recs;
}

std::vector<double> eval_losses(const MultiTaskNet& net, const Dataset& data) {
    if (data.size() == 0)
        throw std::invalid_argument("eval_losses: empty split");
    const auto outs = predict(net, data.x);
    std::vector<double> losses;
    for (std::size_t t = 0; t < net.task_count(); ++t) {
        const Tensor& o = outs[t];
        double acc = 0.0;
        if (net.tasks()[t].loss == LossKind::mse) {
            const Tensor& y = data.y[t].values;
            for (std::size_t i = 0; i < o.size(); ++i)
                acc += (o[i] - y[i]) * (o[i] - y[i]);
            losses.push_back(acc / static_cast<double>(o.size()));
        } else {
            for (std::size_t row = 0; row < o.rows(); ++row) {
                double mx = o.at(row, 0);
                for (std::size_t j = 1; j < o.cols(); ++j)
                    mx = std::max(mx, o.at(row, j));
                double sum = 0.0;
                for (std::size_t j = 0; j < o.cols(); ++j)
                    sum += std::exp(o.at(row, j) - mx);
                acc += mx + std::log(sum) - o.at(row, data.y[t].labels[row]);
            }
            losses.push_back(acc / static_cast<double>(o.rows()));
        }
    }
    return losses;
}

std::vector<MetricRecord> read_metric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open metric file " + path.string());
    std::vector<MetricRecord> recs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#')
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(trim(cell));
        if (cells.size() != 2 && cells.size() != 3)
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                        ": expected 2 or 3 columns");
        const std::size_t off = cells.size() - 2;
        const auto value = parse_number(cells[off]);
        const auto dir = parse_direction(cells[off + 1]);
        if (!value || !dir) {
            if (recs.empty() && !value)
                continue;  // header
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) +
                                        ": cannot parse '" + line + "'");
        }
        MetricRecord r;
        r.task_id = off ? cells[0] : "task" + std::to_string(recs.size());
        r.value = *value;
        r.direction = *dir;
        recs.push_back(std::move(r));
    }
    if (recs.empty())
        throw std::invalid_argument(path.string() + ": no metric records");
    return recs;
}

} // namespace ial
