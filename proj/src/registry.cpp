#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

#include "ial/balance.hpp"
#include "ial/ial.hpp"

namespace ial {

std::unique_ptr<Strategy> make_strategy(std::string_view name, const nlohmann::json& params) {
    std::string key(name);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;

    if (key == "uniform")
        return std::make_unique<UniformStrategy>();
    if (key == "fixed")
        return std::make_unique<FixedStrategy>(p.value("aux_weight", 0.1));
    if (key == "uw")
        return std::make_unique<UwStrategy>();
    if (key == "dwa")
        return std::make_unique<DwaStrategy>(p.value("temperature", 2.0));
    if (key == "gcs")
        return std::make_unique<GcsStrategy>();
    if (key == "olaux")
        return std::make_unique<OlAuxStrategy>(p.value("beta", 0.05),
                                               p.value("initial_lambda", 0.1));
    if (key == "ial")
        return std::make_unique<IalStrategy>(ial_config_from_json(p));
    if (key == "single") {
        if (!p.contains("task_index"))
            throw std::invalid_argument("strategy 'single' needs a task_index parameter");
        return std::make_unique<SingleTaskStrategy>(p.at("task_index").get<std::size_t>());
    }

    std::string known;
    for (auto n : strategy_names)
        known += (known.empty() ? "" : ", ") + std::string(n);
    throw std::invalid_argument("unknown strategy '" + std::string(name) +
                                "' (supported: " + known + ")");
}

} // namespace ial
