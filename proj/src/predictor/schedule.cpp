#include "navlab/predictor/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace navlab::predictor {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("NoiseSchedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start < beta_end))
        throw std::invalid_argument("NoiseSchedule: need 0 < beta_start < beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.betas.resize(steps);
    s.alphas.resize(steps);
    s.alpha_bars.resize(steps);
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double beta =
            steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1.0);
        s.betas[i] = beta;
        s.alphas[i] = 1.0 - beta;
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    if (s.alpha_bars.back() <= 0.0) throw std::invalid_argument("NoiseSchedule: alpha_bar(S) must stay > 0");
    return s;
}

double NoiseSchedule::alpha_bar(int s) const {
    if (s < 0 || s > steps) throw std::out_of_range("NoiseSchedule: step index out of range");
    return s == 0 ? 1.0 : alpha_bars[static_cast<size_t>(s - 1)];
}

Tensor forward_noise(const Tensor& z0, int s, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!nd::same_shape(z0.shape(), eps.shape()))
        throw std::invalid_argument("forward_noise: eps must be shaped like z0");
    if (s < 1 || s > schedule.steps) throw std::invalid_argument("forward_noise: step out of range");
    const double ab = schedule.alpha_bar(s);
    return nd::add(nd::mul_scalar(z0, std::sqrt(ab)), nd::mul_scalar(eps, std::sqrt(1.0 - ab)));
}

std::vector<int> ddim_step_indices(int schedule_steps, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("ddim_step_indices: n_steps must be >= 1");
    n_steps = std::min(n_steps, schedule_steps);
    std::vector<int> idx(static_cast<size_t>(n_steps));
    for (int i = 0; i < n_steps; ++i) {
        // evenly spaced from S down to S/n, then the loop ends at 0
        idx[static_cast<size_t>(i)] =
            static_cast<int>(std::llround(static_cast<double>(schedule_steps) * (n_steps - i) / n_steps));
        if (idx[static_cast<size_t>(i)] < 1) idx[static_cast<size_t>(i)] = 1;
    }
    return idx;
}

Tensor ddim_sample(const DenoiseFn& denoise, nd::Shape shape, const NoiseSchedule& schedule,
                   int n_steps, Rng& rng) {
    nd::NoGradGuard no_grad;
    Tensor z = nd::randn(std::move(shape), rng);
    const auto indices = ddim_step_indices(schedule.steps, n_steps);
    for (size_t i = 0; i < indices.size(); ++i) {
        const int s = indices[i];
        const int s_next = (i + 1 < indices.size()) ? indices[i + 1] : 0;
        const double ab = schedule.alpha_bar(s);
        const double ab_next = schedule.alpha_bar(s_next);
        Tensor eps_hat = denoise(z, s);
        if (!nd::same_shape(eps_hat.shape(), z.shape()))
            throw std::runtime_error("ddim_sample: denoiser output shape mismatch");
        // x0 = (z - sqrt(1-ab) eps) / sqrt(ab); z' = sqrt(ab') x0 + sqrt(1-ab') eps
        Tensor x0 = nd::mul_scalar(nd::sub(z, nd::mul_scalar(eps_hat, std::sqrt(1.0 - ab))),
                                   1.0 / std::sqrt(ab));
        z = nd::add(nd::mul_scalar(x0, std::sqrt(ab_next)),
                    nd::mul_scalar(eps_hat, std::sqrt(1.0 - ab_next)));
    }
    return z;
}

}  // namespace navlab::predictor
