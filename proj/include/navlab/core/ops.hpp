#pragma once

#include "navlab/core/rng.hpp"
#include "navlab/core/tensor.hpp"

namespace navlab::nd {

// Tensor creation
Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi);

// Elementwise (same shape unless noted)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);

// Shape
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor transpose_last2(const Tensor& a);           // 2D or 3D
Tensor broadcast_batch(const Tensor& a, int batch);  // [..] -> [B,..]

// Reductions
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_lastdim(const Tensor& a);
Tensor mean_axis1(const Tensor& a);    // [B,N,d] -> [B,d]
Tensor spatial_mean(const Tensor& a);  // [B,C,H,W] -> [B,C]

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);                          // [m,k]x[k,n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);         // x[m,in], w[out,in]
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false);       // [B,m,k]x[B,k,n]

// Convolution & friends (NCHW)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor add_channel_bias(const Tensor& x, const Tensor& v);  // x[B,C,H,W] + v[B,C]
Tensor scale_channels(const Tensor& x, const Tensor& v);    // x[B,C,H,W] * v[B,C]

// Normalization
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  double eps = 1e-5);

// Softmax over the last dimension
Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);

// Indexing
Tensor embedding(const Tensor& table, const std::vector<int>& ids);  // [V,d] -> [n,d]
Tensor gather_cols(const Tensor& x, const std::vector<int>& idx);    // [m,n] -> [m]

// Composites
Tensor mse_loss(const Tensor& a, const Tensor& b);

}  // namespace navlab::nd
