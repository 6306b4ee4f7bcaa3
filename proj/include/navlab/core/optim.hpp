#pragma once

#include <vector>

#include "navlab/core/tensor.hpp"

namespace navlab::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<nd::Tensor> params, AdamConfig cfg);
    void step();
    void zero_grad();
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }

private:
    std::vector<nd::Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(const std::vector<nd::Tensor>& params, double max_norm);

}  // namespace navlab::nn
