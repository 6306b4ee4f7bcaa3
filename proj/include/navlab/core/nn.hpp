#pragma once

#include <string>
#include <utility>
#include <vector>

#include "navlab/core/ops.hpp"
#include "navlab/core/tensor.hpp"

namespace navlab::nn {

using nd::Tensor;

class Module {
public:
    virtual ~Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;
    Module() = default;

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix = "") const;
    int64_t param_count() const;
    void zero_grad();

protected:
    Tensor register_param(const std::string& name, Tensor t);
    void register_module(const std::string& name, Module& m);

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Module*>> children_;
};

// Initialization: uniform(+-1/sqrt(fan_in)), the usual default for
// linear/conv layers. zero_init makes a layer start as the null map, which
// the residual blocks below rely on.
Tensor init_fan_in(nd::Shape shape, int fan_in, Rng& rng);

class Linear : public Module {
public:
    Linear(int in, int out, Rng& rng, bool bias = true, bool zero_init = false);
    Tensor forward(const Tensor& x) const;
    int in_features, out_features;
    Tensor weight, bias;
};

class Conv2d : public Module {
public:
    Conv2d(int cin, int cout, int ksize, int stride, int pad, Rng& rng, bool bias = true,
           bool zero_init = false);
    Tensor forward(const Tensor& x) const;
    int stride, pad;
    Tensor weight, bias;
};

class GroupNorm : public Module {
public:
    GroupNorm(int groups, int channels);
    Tensor forward(const Tensor& x) const;
    int groups;
    Tensor gamma, beta;
};

class LayerNorm : public Module {
public:
    explicit LayerNorm(int dim);
    Tensor forward(const Tensor& x) const;
    Tensor gamma, beta;
};

class Embedding : public Module {
public:
    Embedding(int vocab, int dim, Rng& rng);
    Tensor forward(const std::vector<int>& ids) const;  // [n, dim]
    Tensor table;
};

// Single-head scaled dot-product attention with input/output projections.
// kv_dim lets keys/values come from a different token width (cross-attention
// onto conditioning tokens). out_scale rescales the output projection init
// (0 = zero-initialized, for identity residuals).
class Attention : public Module {
public:
    Attention(int d_model, Rng& rng, bool zero_init_out = true, int kv_dim = -1,
              double out_scale = 1.0);
    // q_tokens [B,Nq,d], kv_tokens [B,Nk,kv_dim] -> [B,Nq,d]
    Tensor forward(const Tensor& q_tokens, const Tensor& kv_tokens) const;
    Linear wq, wk, wv, wo;
    int d_model, kv_dim;
};

// Two-layer MLP, silu activation, zero-initialized output projection.
class Mlp : public Module {
public:
    Mlp(int dim, int hidden, Rng& rng, bool zero_init_out = true);
    Tensor forward(const Tensor& x) const;
    Linear fc1, fc2;
};

// Pre-norm residual transformer block (self-attention + MLP). With
// zero-initialized output projections the block is the identity.
class TransformerBlock : public Module {
public:
    TransformerBlock(int dim, int mlp_hidden, Rng& rng);
    Tensor forward(const Tensor& x) const;  // [B,N,d]
    LayerNorm ln1, ln2;
    Attention attn;
    Mlp mlp;
};

class GruCell : public Module {
public:
    GruCell(int input_dim, int hidden_dim, Rng& rng);
    // x [B,in], h [B,hidden] -> new hidden [B,hidden]
    Tensor forward(const Tensor& x, const Tensor& h) const;
    int hidden_dim;
    Linear x_proj, h_proj;  // each produce [B, 3*hidden]: reset | update | candidate
};

// Sinusoidal position/step embedding table entry, computed on demand.
Tensor sinusoidal_embedding(const std::vector<int>& steps, int dim, double max_period = 10000.0);

// Largest divisor of `channels` that is <= wanted while keeping at least 4
// channels per group (2 as a fallback). Small groups over tiny feature maps
// normalize the signal away entirely.
int norm_groups(int wanted, int channels);

}  // namespace navlab::nn
