#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "navlab/core/tensor.hpp"

namespace navlab::testing {

// Central finite differences against reverse-mode gradients. `loss_fn` must
// be a deterministic pure function of the checked tensors (freeze any
// internal randomness before calling). Returns the worst relative error,
// |fd - analytic| / max(|fd|, |analytic|, floor).
inline double max_grad_rel_err(const std::vector<nd::Tensor>& checked,
                               const std::function<nd::Tensor()>& loss_fn, double h = 1e-5,
                               double floor = 1e-6) {
    for (const auto& p : checked) const_cast<nd::Tensor&>(p).zero_grad();
    nd::Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(checked.size());
    for (const auto& p : checked) analytic.push_back(p.grad());

    double worst = 0.0;
    for (size_t pi = 0; pi < checked.size(); ++pi) {
        auto& p = const_cast<nd::Tensor&>(checked[pi]);
        for (int64_t i = 0; i < p.numel(); ++i) {
            const double v0 = p.data()[i];
            p.data()[i] = v0 + h;
            const double lp = loss_fn().item();
            p.data()[i] = v0 - h;
            const double lm = loss_fn().item();
            p.data()[i] = v0;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic[pi].empty() ? 0.0 : analytic[pi][static_cast<size_t>(i)];
            const double denom = std::max({std::fabs(fd), std::fabs(an), floor});
            worst = std::max(worst, std::fabs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace navlab::testing
