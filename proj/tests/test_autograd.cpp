#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "navlab/core/nn.hpp"
#include "navlab/core/optim.hpp"
#include "navlab/core/ops.hpp"

using namespace navlab;
using namespace navlab::nd;
using navlab::testing::max_grad_rel_err;

namespace {

constexpr double kTol = 1e-6;  // double-precision central differences are tight

// fixed random weighting turns any output into a scalar probe
Tensor probe(const Tensor& out, uint64_t seed = 99) {
    Rng rng(seed);
    Tensor w = randn(out.shape(), rng);
    return sum_all(mul(out, w));
}

Tensor leaf(Shape shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t = randn(std::move(shape), rng, scale);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST_CASE("gradcheck: elementwise ops") {
    Tensor a = leaf({3, 4}, 1);
    Tensor b = leaf({3, 4}, 2);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(add(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(sub(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(mul(a, b)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(add_scalar(a, 0.7)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(mul_scalar(a, -1.3)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(exp_t(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(silu(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(tanh_t(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(sigmoid_t(a)); }) < kTol);

    Tensor pos = add_scalar(mul(leaf({3, 3}, 3), leaf({3, 3}, 3)), 0.5).detach();
    pos.set_requires_grad(true);
    CHECK(max_grad_rel_err({pos}, [&] { return probe(log_t(pos)); }) < kTol);
}

TEST_CASE("gradcheck: kinked ops away from kinks") {
    // keep samples away from 0 / clamp bounds / ties so FD stays valid
    Tensor a = leaf({4, 4}, 4);
    for (auto& v : a.values()) v = (v >= 0 ? 0.3 : -0.3) + v;
    Tensor b = leaf({4, 4}, 5);
    for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = a.data()[i] + ((i % 2) ? 0.4 : -0.4);
    CHECK(max_grad_rel_err({a}, [&] { return probe(relu(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(clamp(a, -0.9, 0.9)); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(minimum(a, b)); }) < kTol);
}

TEST_CASE("gradcheck: shape ops") {
    Tensor a = leaf({2, 3, 4}, 6);
    Tensor b = leaf({2, 2, 4}, 7);
    CHECK(max_grad_rel_err({a}, [&] { return probe(reshape(a, {6, 4})); }) < kTol);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(concat({a, b}, 1)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(slice(a, 1, 1, 2)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(transpose_last2(a)); }) < kTol);
    Tensor c = leaf({3, 2}, 8);
    CHECK(max_grad_rel_err({c}, [&] { return probe(broadcast_batch(c, 4)); }) < kTol);
}

TEST_CASE("gradcheck: reductions") {
    Tensor a = leaf({2, 3, 4}, 9);
    CHECK(max_grad_rel_err({a}, [&] { return sum_all(a); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return mean_all(a); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(sum_lastdim(a)); }) < kTol);
    CHECK(max_grad_rel_err({a}, [&] { return probe(mean_axis1(a)); }) < kTol);
    Tensor img = leaf({2, 3, 4, 4}, 10);
    CHECK(max_grad_rel_err({img}, [&] { return probe(spatial_mean(img)); }) < kTol);
}

TEST_CASE("gradcheck: matmul family") {
    Tensor a = leaf({3, 5}, 11, 0.5);
    Tensor b = leaf({5, 4}, 12, 0.5);
    CHECK(max_grad_rel_err({a, b}, [&] { return probe(matmul(a, b)); }) < kTol);

    Tensor x = leaf({4, 6}, 13, 0.5);
    Tensor w = leaf({3, 6}, 14, 0.5);
    Tensor bias = leaf({3}, 15, 0.5);
    CHECK(max_grad_rel_err({x, w, bias}, [&] { return probe(linear(x, w, bias)); }) < kTol);
    CHECK(max_grad_rel_err({x, w}, [&] { return probe(linear(x, w, Tensor())); }) < kTol);

    Tensor ba = leaf({2, 3, 4}, 16, 0.5);
    Tensor bb = leaf({2, 4, 5}, 17, 0.5);
    CHECK(max_grad_rel_err({ba, bb}, [&] { return probe(bmm(ba, bb)); }) < kTol);
    Tensor bbt = leaf({2, 5, 4}, 18, 0.5);
    CHECK(max_grad_rel_err({ba, bbt}, [&] { return probe(bmm(ba, bbt, true)); }) < kTol);
}

TEST_CASE("gradcheck: conv and spatial ops") {
    Tensor x = leaf({2, 3, 6, 5}, 19, 0.5);
    Tensor w = leaf({4, 3, 3, 3}, 20, 0.3);
    Tensor b = leaf({4}, 21, 0.2);
    CHECK(max_grad_rel_err({x, w, b}, [&] { return probe(conv2d(x, w, b, 1, 1)); }) < kTol);
    CHECK(max_grad_rel_err({x, w, b}, [&] { return probe(conv2d(x, w, b, 2, 1)); }) < kTol);
    CHECK(max_grad_rel_err({x}, [&] { return probe(upsample_nearest2(x)); }) < kTol);
    Tensor v = leaf({2, 3}, 22);
    CHECK(max_grad_rel_err({x, v}, [&] { return probe(add_channel_bias(x, v)); }) < kTol);
}

TEST_CASE("gradcheck: normalization and softmax") {
    Tensor x = leaf({3, 6}, 23);
    Tensor g = leaf({6}, 24, 0.5);
    for (auto& v : g.values()) v += 1.0;
    Tensor be = leaf({6}, 25, 0.3);
    CHECK(max_grad_rel_err({x, g, be}, [&] { return probe(layer_norm(x, g, be)); }, 1e-5, 1e-5) < 1e-5);

    Tensor xi = leaf({2, 4, 3, 3}, 26);
    Tensor gg = leaf({4}, 27, 0.4);
    for (auto& v : gg.values()) v += 1.0;
    Tensor bb = leaf({4}, 28, 0.3);
    CHECK(max_grad_rel_err({xi, gg, bb}, [&] { return probe(group_norm(xi, gg, bb, 2)); }, 1e-5, 1e-5) < 1e-5);

    Tensor logits = leaf({4, 5}, 29);
    CHECK(max_grad_rel_err({logits}, [&] { return probe(softmax_lastdim(logits)); }) < kTol);
    CHECK(max_grad_rel_err({logits}, [&] { return probe(log_softmax_lastdim(logits)); }) < kTol);
}

TEST_CASE("gradcheck: indexing") {
    Tensor table = leaf({6, 3}, 30);
    std::vector<int> ids = {0, 2, 2, 5};
    CHECK(max_grad_rel_err({table}, [&] { return probe(embedding(table, ids)); }) < kTol);
    Tensor x = leaf({4, 3}, 31);
    std::vector<int> idx = {2, 0, 1, 1};
    CHECK(max_grad_rel_err({x}, [&] { return probe(gather_cols(x, idx)); }) < kTol);
}

TEST_CASE("gradcheck: nn layers end to end") {
    Rng rng(32);
    nn::Attention attn(6, rng, /*zero_init_out=*/false);
    Tensor q = leaf({2, 3, 6}, 33, 0.5);
    Tensor kv = leaf({2, 4, 6}, 34, 0.5);
    auto params = attn.parameters();
    std::vector<Tensor> checked = params;
    checked.push_back(q);
    checked.push_back(kv);
    CHECK(max_grad_rel_err(checked, [&] { return probe(attn.forward(q, kv)); }) < kTol);

    nn::GruCell gru(4, 5, rng);
    Tensor x = leaf({3, 4}, 35, 0.5);
    Tensor h = leaf({3, 5}, 36, 0.5);
    auto gparams = gru.parameters();
    gparams.push_back(x);
    gparams.push_back(h);
    CHECK(max_grad_rel_err(gparams, [&] { return probe(gru.forward(x, h)); }) < kTol);

    nn::TransformerBlock block(6, 12, rng);
    // perturb the zero-initialized projections so the whole path carries gradient
    for (auto& p : block.parameters())
        if (p.values()[0] == 0.0)
            for (int64_t i = 0; i < p.numel(); ++i) p.data()[i] += 0.01 * ((i % 3) - 1.0);
    Tensor tokens = leaf({2, 4, 6}, 37, 0.5);
    auto bparams = block.parameters();
    bparams.push_back(tokens);
    CHECK(max_grad_rel_err(bparams, [&] { return probe(block.forward(tokens)); }, 1e-5, 1e-5) < 5e-5);
}

TEST_CASE("autograd: value reused twice accumulates both paths") {
    Tensor x = leaf({3}, 38);
    auto loss_fn = [&] { return sum_all(mul(x, x)); };
    CHECK(max_grad_rel_err({x}, loss_fn) < kTol);
    x.zero_grad();
    Tensor loss = loss_fn();
    loss.backward();
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(x.grad()[static_cast<size_t>(i)] == doctest::Approx(2.0 * x.data()[i]));
}

TEST_CASE("autograd: NoGradGuard builds no graph") {
    Tensor x = leaf({2, 2}, 39);
    nd::NoGradGuard guard;
    Tensor y = mul(x, x);
    CHECK(y.impl()->grad_fn == nullptr);
}

TEST_CASE("zero-initialized GRU keeps hidden at zero and reads only inputs") {
    Rng rng(40);
    nn::GruCell gru(3, 4, rng);
    for (auto& p : gru.parameters()) std::fill(p.values().begin(), p.values().end(), 0.0);
    Tensor x = leaf({2, 3}, 41);
    Tensor h0 = Tensor::zeros({2, 4});
    Tensor h1 = gru.forward(x, h0);
    for (double v : h1.values()) CHECK(v == 0.0);
}

TEST_CASE("Adam minimizes a quadratic") {
    Rng rng(42);
    Tensor x = randn({8}, rng);
    x.set_requires_grad(true);
    nn::Adam opt({x}, {.lr = 0.05});
    for (int it = 0; it < 300; ++it) {
        opt.zero_grad();
        Tensor loss = sum_all(mul(x, x));
        loss.backward();
        opt.step();
    }
    for (double v : x.values()) CHECK(std::fabs(v) < 1e-3);
}

TEST_CASE("clip_grad_norm rescales to the cap") {
    Tensor x = Tensor::from_vector({2}, {3.0, 4.0});
    x.set_requires_grad(true);
    Tensor loss = sum_all(mul(x, x));
    loss.backward();  // grad = (6, 8), norm 10
    const double norm = nn::clip_grad_norm({x}, 5.0);
    CHECK(norm == doctest::Approx(10.0));
    CHECK(x.grad()[0] == doctest::Approx(3.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}
