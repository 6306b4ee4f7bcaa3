#pragma once

#include <functional>
#include <vector>

#include "navlab/core/ops.hpp"
#include "navlab/core/rng.hpp"

namespace navlab::predictor {

using nd::Tensor;

// Forward-process constants. Betas strictly increase, alpha_bars strictly
// decrease with alpha_bar(S) > 0; alpha_bar(0) == 1 by convention.
struct NoiseSchedule {
    std::vector<double> betas;       // beta_1..beta_S
    std::vector<double> alphas;      // 1 - beta_s
    std::vector<double> alpha_bars;  // cumulative products
    int steps = 0;

    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

    double alpha_bar(int s) const;  // s in [0, steps]
};

// z_s = sqrt(abar_s) * z0 + sqrt(1 - abar_s) * eps
Tensor forward_noise(const Tensor& z0, int s, const Tensor& eps, const NoiseSchedule& schedule);

// eps-prediction callback: (z_s, s) -> eps_hat
using DenoiseFn = std::function<Tensor(const Tensor& z, int s)>;

// Deterministic reverse process (eta = 0) over n_steps evenly spaced schedule
// indices, starting from noise drawn from `rng`. No gradients are recorded.
Tensor ddim_sample(const DenoiseFn& denoise, nd::Shape shape, const NoiseSchedule& schedule,
                   int n_steps, Rng& rng);

// The evenly spaced descending index sequence the sampler visits (ends at 0).
std::vector<int> ddim_step_indices(int schedule_steps, int n_steps);

}  // namespace navlab::predictor
