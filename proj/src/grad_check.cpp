#include "sft/grad_check.hpp"

#include <cmath>

#include "sft/rng.hpp"

namespace sft {

double grad_check(const std::function<double(const ParamTree&)>& f, const ParamTree& point,
                  const ParamTree& analytic, const GradCheckOptions& opts) {
    if (precision() != Precision::f64)
        throw ContractError("grad_check: requires wide (f64) precision mode");
    if (opts.h < 1e-6 || opts.h > 1e-4)
        throw ContractError("grad_check: h must be in [1e-6, 1e-4]");
    if (!point.same_layout(analytic))
        throw ContractError("grad_check: analytic gradient layout mismatch");
    if (!std::isfinite(f(point))) throw EvaluationError("grad_check: f is non-finite at point");

    ParamTree work = point.zeros_like();
    for (size_t i = 0; i < point.size(); ++i) work.entry(i).tensor.data = point.entry(i).tensor.data;

    double max_rel = 0.0;
    for (size_t pi = 0; pi < point.size(); ++pi) {
        int64_t n = point.entry(pi).tensor.numel();
        int64_t samples = opts.max_samples_per_tensor > 0
                              ? std::min<int64_t>(n, opts.max_samples_per_tensor)
                              : n;
        uint64_t key = rng::derive(opts.seed, rng::fnv1a(point.entry(pi).path));
        for (int64_t s = 0; s < samples; ++s) {
            int64_t j = samples == n ? s : static_cast<int64_t>(rng::below(key, static_cast<uint64_t>(s), static_cast<uint64_t>(n)));
            double* slot = &work.entry(pi).tensor.data[static_cast<size_t>(j)];
            double saved = *slot;
            *slot = saved + opts.h;
            double fp = f(work);
            *slot = saved - opts.h;
            double fm = f(work);
            *slot = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw EvaluationError("grad_check: f is non-finite near point at " +
                                      point.entry(pi).path);
            double numeric = (fp - fm) / (2.0 * opts.h);
            double a = analytic.entry(pi).tensor.data[static_cast<size_t>(j)];
            double rel = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace sft
