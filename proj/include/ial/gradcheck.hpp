#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ial {

struct GradcheckOptions {
    std::size_t cases = 100;
    std::uint64_t seed = 20240601;
    double step = 1e-5;  // central-difference step
};

/// Worst case of one check. Relative error of a case is
/// max|analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-4).
struct GradcheckResult {
    std::string name;
    std::size_t cases = 0;
    double max_rel_error = 0.0;
};

/// Finite-difference checks of every graph op, the uncertainty sigma and eta
/// derivatives, and the encoder gradient obtained by injecting dL/dz.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts = {});

} // namespace ial
