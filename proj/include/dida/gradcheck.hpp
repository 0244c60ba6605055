#pragma once

#include <functional>

#include "dida/optim.hpp"

namespace dida {

/// Central-difference check of reverse-mode gradients.
///
/// Rebuilds the loss through `loss_fn` (which must close over `params` and be
/// deterministic), compares the analytic gradient of every sampled coordinate
/// against (L(w+eps) - L(w-eps)) / 2eps, and returns the max of
/// |analytic - central| / (|analytic| + |central| + 1e-8).
inline double finite_diff_check(const std::function<Var()>& loss_fn,
                                const std::vector<Parameter*>& params, float epsilon,
                                int max_coords_per_param = 32, uint64_t sample_seed = 0) {
    if (epsilon <= 0.0f) throw std::invalid_argument("finite_diff_check: epsilon must be > 0");

    for (Parameter* p : params) p->zero_grad();
    Var loss = loss_fn();
    if (!std::isfinite(loss.scalar64()))
        throw std::runtime_error("finite_diff_check: non-finite loss " +
                                 std::to_string(loss.scalar64()));
    backward(loss);

    std::vector<std::vector<float>> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        std::vector<float> g(static_cast<size_t>(p->value().size()), 0.0f);
        if (p->has_grad()) std::copy_n(p->grad().data(), g.size(), g.begin());
        analytic.push_back(std::move(g));
        p->zero_grad();
    }

    Rng rng(derive_seed(sample_seed, "gradcheck"));
    double max_err = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const int64_t n = p->value().size();
        std::vector<int64_t> coords;
        if (n <= max_coords_per_param) {
            for (int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int i = 0; i < max_coords_per_param; ++i) coords.push_back(rng.index(n));
        }
        for (int64_t ci : coords) {
            float* w = p->value().data();
            const float saved = w[ci];
            w[ci] = saved + epsilon;
            const double lp = loss_fn().scalar64();
            w[ci] = saved - epsilon;
            const double lm = loss_fn().scalar64();
            w[ci] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("finite_diff_check: non-finite loss under perturbation");
            const double central = (lp - lm) / (2.0 * static_cast<double>(epsilon));
            const double a = static_cast<double>(analytic[pi][static_cast<size_t>(ci)]);
            const double err = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-8);
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace dida
