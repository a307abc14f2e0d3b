#pragma once

#include <functional>

#include "sft/param_tree.hpp"

namespace sft {

struct GradCheckOptions {
    double h = 1e-5;                 // central-difference step, must be in [1e-6, 1e-4]
    int max_samples_per_tensor = 64; // 0 = check every element
    uint64_t seed = 0x5eed;
};

// Central finite differences against precomputed analytic gradients.
// Returns max over sampled elements of |analytic - numeric| / max(1, |analytic|).
// Requires wide (f64) precision; f must be finite at `point`.
double grad_check(const std::function<double(const ParamTree&)>& f, const ParamTree& point,
                  const ParamTree& analytic, const GradCheckOptions& opts = {});

}  // namespace sft
