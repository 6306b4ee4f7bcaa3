#include "navlab/core/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace navlab::nn {

using namespace nd;

Tensor Module::register_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, t);
    return t;
}

void Module::register_module(const std::string& name, Module& m) {
    children_.emplace_back(name, &m);
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_) out.push_back(t);
    for (const auto& [name, child] : children_) {
        auto sub = child->parameters();
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, t] : params_) out.emplace_back(prefix.empty() ? name : prefix + "." + name, t);
    for (const auto& [name, child] : children_) {
        auto sub = child->named_parameters(prefix.empty() ? name : prefix + "." + name);
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

int64_t Module::param_count() const {
    int64_t n = 0;
    for (const auto& t : parameters()) n += t.numel();
    return n;
}

void Module::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

Tensor init_fan_in(Shape shape, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return rand_uniform(std::move(shape), rng, -bound, bound);
}

// ---------------------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng, bool with_bias, bool zero_init)
    : in_features(in), out_features(out) {
    weight = register_param("weight", zero_init ? Tensor::zeros({out, in})
                                                : init_fan_in({out, in}, in, rng));
    if (with_bias)
        bias = register_param("bias", zero_init ? Tensor::zeros({out}) : init_fan_in({out}, in, rng));
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight, bias); }

Conv2d::Conv2d(int cin, int cout, int ksize, int stride_, int pad_, Rng& rng, bool with_bias,
               bool zero_init)
    : stride(stride_), pad(pad_) {
    const int fan_in = cin * ksize * ksize;
    weight = register_param("weight", zero_init ? Tensor::zeros({cout, cin, ksize, ksize})
                                                : init_fan_in({cout, cin, ksize, ksize}, fan_in, rng));
    if (with_bias)
        bias = register_param("bias",
                              zero_init ? Tensor::zeros({cout}) : init_fan_in({cout}, fan_in, rng));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }

GroupNorm::GroupNorm(int groups_, int channels) : groups(groups_) {
    gamma = register_param("gamma", Tensor::full({channels}, 1.0));
    beta = register_param("beta", Tensor::zeros({channels}));
}

Tensor GroupNorm::forward(const Tensor& x) const { return group_norm(x, gamma, beta, groups); }

LayerNorm::LayerNorm(int dim) {
    gamma = register_param("gamma", Tensor::full({dim}, 1.0));
    beta = register_param("beta", Tensor::zeros({dim}));
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

Embedding::Embedding(int vocab, int dim, Rng& rng) {
    table = register_param("table", randn({vocab, dim}, rng, 0.02));
}

Tensor Embedding::forward(const std::vector<int>& ids) const { return embedding(table, ids); }

// ---------------------------------------------------------------------------

Attention::Attention(int d, Rng& rng, bool zero_init_out, int kv_dim_, double out_scale)
    : wq(d, d, rng), wk(kv_dim_ < 0 ? d : kv_dim_, d, rng), wv(kv_dim_ < 0 ? d : kv_dim_, d, rng),
      wo(d, d, rng, true, zero_init_out), d_model(d), kv_dim(kv_dim_ < 0 ? d : kv_dim_) {
    if (!zero_init_out && out_scale != 1.0)
        for (auto& v : wo.weight.values()) v *= out_scale;
    register_module("wq", wq);
    register_module("wk", wk);
    register_module("wv", wv);
    register_module("wo", wo);
}

Tensor Attention::forward(const Tensor& q_tokens, const Tensor& kv_tokens) const {
    if (q_tokens.ndim() != 3 || kv_tokens.ndim() != 3)
        throw std::invalid_argument("Attention: expected [B,N,d] tokens");
    if (q_tokens.dim(0) != kv_tokens.dim(0))
        throw std::invalid_argument("Attention: batch mismatch");
    if (q_tokens.dim(2) != d_model || kv_tokens.dim(2) != kv_dim)
        throw std::invalid_argument("Attention: token dim mismatch");
    Tensor q = wq.forward(q_tokens);
    Tensor k = wk.forward(kv_tokens);
    Tensor v = wv.forward(kv_tokens);
    Tensor scores = mul_scalar(bmm(q, k, /*trans_b=*/true), 1.0 / std::sqrt(static_cast<double>(d_model)));
    Tensor attn = softmax_lastdim(scores);
    return wo.forward(bmm(attn, v));
}

Mlp::Mlp(int dim, int hidden, Rng& rng, bool zero_init_out)
    : fc1(dim, hidden, rng), fc2(hidden, dim, rng, true, zero_init_out) {
    register_module("fc1", fc1);
    register_module("fc2", fc2);
}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(silu(fc1.forward(x))); }

TransformerBlock::TransformerBlock(int dim, int mlp_hidden, Rng& rng)
    : ln1(dim), ln2(dim), attn(dim, rng, /*zero_init_out=*/true), mlp(dim, mlp_hidden, rng) {
    register_module("ln1", ln1);
    register_module("ln2", ln2);
    register_module("attn", attn);
    register_module("mlp", mlp);
}

Tensor TransformerBlock::forward(const Tensor& x) const {
    Tensor h = ln1.forward(x);
    Tensor y = add(x, attn.forward(h, h));
    return add(y, mlp.forward(ln2.forward(y)));
}

GruCell::GruCell(int input_dim, int hidden_dim_, Rng& rng)
    : hidden_dim(hidden_dim_), x_proj(input_dim, 3 * hidden_dim_, rng),
      h_proj(hidden_dim_, 3 * hidden_dim_, rng) {
    register_module("x_proj", x_proj);
    register_module("h_proj", h_proj);
}

Tensor GruCell::forward(const Tensor& x, const Tensor& h) const {
    Tensor xp = x_proj.forward(x);  // [B, 3h]
    Tensor hp = h_proj.forward(h);
    const int hd = hidden_dim;
    Tensor r = sigmoid_t(add(slice(xp, 1, 0, hd), slice(hp, 1, 0, hd)));
    Tensor z = sigmoid_t(add(slice(xp, 1, hd, hd), slice(hp, 1, hd, hd)));
    Tensor n = tanh_t(add(slice(xp, 1, 2 * hd, hd), mul(r, slice(hp, 1, 2 * hd, hd))));
    // h' = n + z * (h - n)
    return add(n, mul(z, sub(h, n)));
}

int norm_groups(int wanted, int channels) {
    for (int min_per_group : {4, 2}) {
        for (int g = std::min(wanted, channels / min_per_group); g > 1; --g)
            if (channels % g == 0) return g;
    }
    return 1;
}

Tensor sinusoidal_embedding(const std::vector<int>& steps, int dim, double max_period) {
    const int half = dim / 2;
    Tensor out = Tensor::zeros({static_cast<int>(steps.size()), dim});
    for (size_t i = 0; i < steps.size(); ++i) {
        double* row = out.data() + i * dim;
        for (int j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(max_period) * j / half);
            row[j] = std::sin(steps[i] * freq);
            row[half + j] = std::cos(steps[i] * freq);
        }
    }
    return out;
}

}  // namespace navlab::nn
