#include "navlab/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "navlab/core/kernels.hpp"

namespace navlab::nd {

namespace {

bool needs(const TensorImplPtr& t) { return t->requires_grad || t->grad_fn != nullptr; }

void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Tensor empty_like_shape(Shape s) { return Tensor::zeros(std::move(s)); }

// generic elementwise unary op with dy->dx scaling computed from (x, y)
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd dydx) {
    Tensor out = empty_like_shape(a.shape());
    const double* x = a.data();
    double* y = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
    if (detail::track({&a})) {
        detail::attach(out, name, {a}, [a, dydx](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            const double* x = a.data();
            const double* yv = o.value.data();
            const double* dy = o.grad.data();
            double* dx = a.impl()->grad.data();
            const int64_t n = o.numel();
            for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * dydx(x[i], yv[i]);
        });
    }
    return out;
}

}  // namespace

Tensor randn(Shape shape, Rng& rng, double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.normal() * stddev;
    return t;
}

Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check(same_shape(a.shape(), b.shape()), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = empty_like_shape(a.shape());
    kernels::vec_add(a.numel(), a.data(), b.data(), out.data());
    if (detail::track({&a, &b})) {
        detail::attach(out, "add", {a, b}, [a, b](const TensorImpl& o) {
            for (const Tensor& t : {a, b}) {
                if (!needs(t.impl())) continue;
                t.impl()->ensure_grad();
                kernels::vec_axpy(o.numel(), 1.0, o.grad.data(), t.impl()->grad.data());
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check(same_shape(a.shape(), b.shape()), "sub: shape mismatch");
    Tensor out = empty_like_shape(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (detail::track({&a, &b})) {
        detail::attach(out, "sub", {a, b}, [a, b](const TensorImpl& o) {
            if (needs(a.impl())) {
                a.impl()->ensure_grad();
                kernels::vec_axpy(o.numel(), 1.0, o.grad.data(), a.impl()->grad.data());
            }
            if (needs(b.impl())) {
                b.impl()->ensure_grad();
                kernels::vec_axpy(o.numel(), -1.0, o.grad.data(), b.impl()->grad.data());
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check(same_shape(a.shape(), b.shape()), "mul: shape mismatch");
    Tensor out = empty_like_shape(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::track({&a, &b})) {
        detail::attach(out, "mul", {a, b}, [a, b](const TensorImpl& o) {
            const int64_t n = o.numel();
            const double* dy = o.grad.data();
            if (needs(a.impl())) {
                a.impl()->ensure_grad();
                double* da = a.impl()->grad.data();
                const double* bv = b.data();
                for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
            }
            if (needs(b.impl())) {
                b.impl()->ensure_grad();
                double* db = b.impl()->grad.data();
                const double* av = a.data();
                for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
            }
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op("add_scalar", a, [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op("mul_scalar", a, [s](double x) { return x * s; },
                    [s](double, double) { return s; });
}

Tensor exp_t(const Tensor& a) {
    return unary_op("exp", a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
    return unary_op("log", a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
    return unary_op("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
    return unary_op("silu", a, [](double x) { return x / (1.0 + std::exp(-x)); },
                    [](double x, double) {
                        const double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 + x * (1.0 - s));
                    });
}

Tensor tanh_t(const Tensor& a) {
    return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid_t(const Tensor& a) {
    return unary_op("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    check(lo <= hi, "clamp: lo > hi");
    return unary_op("clamp", a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                    [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    check(same_shape(a.shape(), b.shape()), "minimum: shape mismatch");
    Tensor out = empty_like_shape(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = std::min(a.data()[i], b.data()[i]);
    if (detail::track({&a, &b})) {
        detail::attach(out, "minimum", {a, b}, [a, b](const TensorImpl& o) {
            const int64_t n = o.numel();
            const double* dy = o.grad.data();
            const double* av = a.data();
            const double* bv = b.data();
            if (needs(a.impl())) {
                a.impl()->ensure_grad();
                double* da = a.impl()->grad.data();
                for (int64_t i = 0; i < n; ++i)
                    if (av[i] <= bv[i]) da[i] += dy[i];
            }
            if (needs(b.impl())) {
                b.impl()->ensure_grad();
                double* db = b.impl()->grad.data();
                for (int64_t i = 0; i < n; ++i)
                    if (av[i] > bv[i]) db[i] += dy[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    check(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out = Tensor::from_vector(std::move(shape), a.values());
    if (detail::track({&a})) {
        detail::attach(out, "reshape", {a}, [a](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            kernels::vec_axpy(o.numel(), 1.0, o.grad.data(), a.impl()->grad.data());
        });
    }
    return out;
}

namespace {
// outer/inner extents around `axis`
void split_extents(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: empty input");
    Shape out_shape = parts[0].shape();
    check(axis >= 0 && axis < static_cast<int>(out_shape.size()), "concat: bad axis");
    int total = 0;
    for (const Tensor& p : parts) {
        check(p.ndim() == static_cast<int>(out_shape.size()), "concat: rank mismatch");
        for (int i = 0; i < p.ndim(); ++i)
            if (i != axis) check(p.dim(i) == out_shape[i], "concat: dim mismatch off-axis");
        total += p.dim(axis);
    }
    out_shape[axis] = total;
    Tensor out = empty_like_shape(out_shape);
    int64_t outer, inner;
    split_extents(out_shape, axis, outer, inner);
    const int64_t out_stride = static_cast<int64_t>(total) * inner;
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        const int64_t blk = static_cast<int64_t>(p.dim(axis)) * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * out_stride + offset, p.data() + o * blk, sizeof(double) * blk);
        offset += blk;
    }
    bool track = false;
    for (const Tensor& p : parts)
        if (detail::track({&p})) track = true;
    if (track) {
        std::vector<Tensor> inputs = parts;
        detail::attach(out, "concat", inputs, [inputs, axis](const TensorImpl& o) {
            int64_t outer, inner;
            split_extents(o.shape, axis, outer, inner);
            const int64_t out_stride = static_cast<int64_t>(o.shape[axis]) * inner;
            int64_t offset = 0;
            for (const Tensor& p : inputs) {
                const int64_t blk = static_cast<int64_t>(p.shape()[axis]) * inner;
                if (needs(p.impl())) {
                    p.impl()->ensure_grad();
                    double* dp = p.impl()->grad.data();
                    for (int64_t oo = 0; oo < outer; ++oo)
                        kernels::vec_axpy(blk, 1.0, o.grad.data() + oo * out_stride + offset, dp + oo * blk);
                }
                offset += blk;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    check(axis >= 0 && axis < a.ndim(), "slice: bad axis");
    check(start >= 0 && len > 0 && start + len <= a.dim(axis), "slice: out of range");
    Shape out_shape = a.shape();
    out_shape[axis] = len;
    Tensor out = empty_like_shape(out_shape);
    int64_t outer, inner;
    split_extents(a.shape(), axis, outer, inner);
    const int64_t in_stride = static_cast<int64_t>(a.dim(axis)) * inner;
    const int64_t blk = static_cast<int64_t>(len) * inner;
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * blk, a.data() + o * in_stride + start * inner, sizeof(double) * blk);
    if (detail::track({&a})) {
        detail::attach(out, "slice", {a}, [a, axis, start](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            int64_t outer, inner;
            split_extents(a.shape(), axis, outer, inner);
            const int64_t in_stride = static_cast<int64_t>(a.dim(axis)) * inner;
            const int64_t blk = static_cast<int64_t>(o.shape[axis]) * inner;
            for (int64_t oo = 0; oo < outer; ++oo)
                kernels::vec_axpy(blk, 1.0, o.grad.data() + oo * blk,
                                  a.impl()->grad.data() + oo * in_stride + start * inner);
        });
    }
    return out;
}

Tensor transpose_last2(const Tensor& a) {
    check(a.ndim() == 2 || a.ndim() == 3, "transpose_last2: need 2D or 3D");
    const int batch = a.ndim() == 3 ? a.dim(0) : 1;
    const int m = a.dim(-2), n = a.dim(-1);
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Tensor out = empty_like_shape(out_shape);
    for (int bidx = 0; bidx < batch; ++bidx)
        kernels::transpose(m, n, a.data() + static_cast<int64_t>(bidx) * m * n,
                           out.data() + static_cast<int64_t>(bidx) * m * n);
    if (detail::track({&a})) {
        detail::attach(out, "transpose_last2", {a}, [a, batch, m, n](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            std::vector<double> tmp(static_cast<size_t>(m) * n);
            for (int bidx = 0; bidx < batch; ++bidx) {
                kernels::transpose(n, m, o.grad.data() + static_cast<int64_t>(bidx) * m * n, tmp.data());
                kernels::vec_axpy(static_cast<int64_t>(m) * n, 1.0, tmp.data(),
                                  a.impl()->grad.data() + static_cast<int64_t>(bidx) * m * n);
            }
        });
    }
    return out;
}

Tensor broadcast_batch(const Tensor& a, int batch) {
    check(batch >= 1, "broadcast_batch: batch must be >= 1");
    Shape out_shape;
    out_shape.push_back(batch);
    for (int d : a.shape()) out_shape.push_back(d);
    Tensor out = empty_like_shape(out_shape);
    const int64_t n = a.numel();
    for (int bidx = 0; bidx < batch; ++bidx)
        std::memcpy(out.data() + static_cast<int64_t>(bidx) * n, a.data(), sizeof(double) * n);
    if (detail::track({&a})) {
        detail::attach(out, "broadcast_batch", {a}, [a, batch](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            const int64_t n = a.numel();
            for (int bidx = 0; bidx < batch; ++bidx)
                kernels::vec_axpy(n, 1.0, o.grad.data() + static_cast<int64_t>(bidx) * n,
                                  a.impl()->grad.data());
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    Tensor out = Tensor::scalar(s);
    if (detail::track({&a})) {
        detail::attach(out, "sum_all", {a}, [a](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            const double g = o.grad[0];
            double* da = a.impl()->grad.data();
            for (int64_t i = 0; i < a.numel(); ++i) da[i] += g;
        });
    }
    return out;
}

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_lastdim(const Tensor& a) {
    check(a.ndim() >= 1, "sum_lastdim: scalar input");
    const int d = a.dim(-1);
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out = empty_like_shape(out_shape);
    const int64_t rows = out.numel();
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* x = a.data() + r * d;
        for (int j = 0; j < d; ++j) s += x[j];
        out.data()[r] = s;
    }
    if (detail::track({&a})) {
        detail::attach(out, "sum_lastdim", {a}, [a, d](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            double* da = a.impl()->grad.data();
            const int64_t rows = o.numel();
            for (int64_t r = 0; r < rows; ++r) {
                const double g = o.grad[r];
                for (int j = 0; j < d; ++j) da[r * d + j] += g;
            }
        });
    }
    return out;
}

Tensor mean_axis1(const Tensor& a) {
    check(a.ndim() == 3, "mean_axis1: need [B,N,d]");
    const int B = a.dim(0), N = a.dim(1), d = a.dim(2);
    Tensor out = empty_like_shape({B, d});
    for (int b = 0; b < B; ++b) {
        double* y = out.data() + static_cast<int64_t>(b) * d;
        for (int n = 0; n < N; ++n) {
            const double* x = a.data() + (static_cast<int64_t>(b) * N + n) * d;
            for (int j = 0; j < d; ++j) y[j] += x[j];
        }
        for (int j = 0; j < d; ++j) y[j] /= N;
    }
    if (detail::track({&a})) {
        detail::attach(out, "mean_axis1", {a}, [a, B, N, d](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            double* da = a.impl()->grad.data();
            const double inv = 1.0 / N;
            for (int b = 0; b < B; ++b)
                for (int n = 0; n < N; ++n)
                    kernels::vec_axpy(d, inv, o.grad.data() + static_cast<int64_t>(b) * d,
                                      da + (static_cast<int64_t>(b) * N + n) * d);
        });
    }
    return out;
}

Tensor spatial_mean(const Tensor& a) {
    check(a.ndim() == 4, "spatial_mean: need [B,C,H,W]");
    const int B = a.dim(0), C = a.dim(1);
    const int64_t hw = static_cast<int64_t>(a.dim(2)) * a.dim(3);
    Tensor out = empty_like_shape({B, C});
    for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        double s = 0.0;
        const double* x = a.data() + bc * hw;
        for (int64_t i = 0; i < hw; ++i) s += x[i];
        out.data()[bc] = s / static_cast<double>(hw);
    }
    if (detail::track({&a})) {
        detail::attach(out, "spatial_mean", {a}, [a, hw](const TensorImpl& o) {
            if (!needs(a.impl())) return;
            a.impl()->ensure_grad();
            double* da = a.impl()->grad.data();
            const double inv = 1.0 / static_cast<double>(hw);
            for (int64_t bc = 0; bc < o.numel(); ++bc) {
                const double g = o.grad[bc] * inv;
                double* row = da + bc * hw;
                for (int64_t i = 0; i < hw; ++i) row[i] += g;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul: need 2D inputs");
    check(a.dim(1) == b.dim(0), "matmul: inner dim mismatch");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = empty_like_shape({m, n});
    kernels::gemm(m, n, k, a.data(), b.data(), out.data());
    if (detail::track({&a, &b})) {
        detail::attach(out, "matmul", {a, b}, [a, b, m, k, n](const TensorImpl& o) {
            if (needs(a.impl())) {
                a.impl()->ensure_grad();
                kernels::gemm_nt(m, k, n, o.grad.data(), b.data(), a.impl()->grad.data(), true);
            }
            if (needs(b.impl())) {
                b.impl()->ensure_grad();
                kernels::gemm_tn(k, n, m, a.data(), o.grad.data(), b.impl()->grad.data(), true);
            }
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
    const int in = w.dim(1), out_dim = w.dim(0);
    check(x.dim(-1) == in, "linear: input feature dim mismatch");
    const int64_t rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    Tensor out = empty_like_shape(out_shape);
    kernels::gemm_nt(static_cast<int>(rows), out_dim, in, x.data(), w.data(), out.data());
    if (b.defined()) {
        check(b.ndim() == 1 && b.dim(0) == out_dim, "linear: bias shape mismatch");
        for (int64_t r = 0; r < rows; ++r)
            kernels::vec_axpy(out_dim, 1.0, b.data(), out.data() + r * out_dim);
    }
    if (detail::track({&x, &w, &b})) {
        detail::attach(out, "linear", b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w},
                       [x, w, b, rows, in, out_dim](const TensorImpl& o) {
                           const double* dy = o.grad.data();
                           if (needs(x.impl())) {
                               x.impl()->ensure_grad();
                               kernels::gemm(static_cast<int>(rows), in, out_dim, dy, w.data(),
                                             x.impl()->grad.data(), true);
                           }
                           if (needs(w.impl())) {
                               w.impl()->ensure_grad();
                               kernels::gemm_tn(out_dim, in, static_cast<int>(rows), dy, x.data(),
                                                w.impl()->grad.data(), true);
                           }
                           if (b.defined() && needs(b.impl())) {
                               b.impl()->ensure_grad();
                               double* db = b.impl()->grad.data();
                               for (int64_t r = 0; r < rows; ++r)
                                   kernels::vec_axpy(out_dim, 1.0, dy + r * out_dim, db);
                           }
                       });
    }
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b) {
    check(a.ndim() == 3 && b.ndim() == 3, "bmm: need 3D inputs");
    const int B = a.dim(0), m = a.dim(1), k = a.dim(2);
    check(b.dim(0) == B, "bmm: batch mismatch");
    const int n = trans_b ? b.dim(1) : b.dim(2);
    check((trans_b ? b.dim(2) : b.dim(1)) == k, "bmm: inner dim mismatch");
    Tensor out = empty_like_shape({B, m, n});
    for (int i = 0; i < B; ++i) {
        const double* ai = a.data() + static_cast<int64_t>(i) * m * k;
        const double* bi = b.data() + static_cast<int64_t>(i) * (trans_b ? n * k : k * n);
        double* ci = out.data() + static_cast<int64_t>(i) * m * n;
        if (trans_b)
            kernels::gemm_nt(m, n, k, ai, bi, ci);
        else
            kernels::gemm(m, n, k, ai, bi, ci);
    }
    if (detail::track({&a, &b})) {
        detail::attach(out, "bmm", {a, b}, [a, b, B, m, k, n, trans_b](const TensorImpl& o) {
            for (int i = 0; i < B; ++i) {
                const double* dyi = o.grad.data() + static_cast<int64_t>(i) * m * n;
                const double* ai = a.data() + static_cast<int64_t>(i) * m * k;
                const double* bi = b.data() + static_cast<int64_t>(i) * (trans_b ? n * k : k * n);
                if (needs(a.impl())) {
                    a.impl()->ensure_grad();
                    double* dai = a.impl()->grad.data() + static_cast<int64_t>(i) * m * k;
                    if (trans_b)
                        kernels::gemm(m, k, n, dyi, bi, dai, true);  // dA = dC * B
                    else
                        kernels::gemm_nt(m, k, n, dyi, bi, dai, true);  // dA = dC * B^T
                }
                if (needs(b.impl())) {
                    b.impl()->ensure_grad();
                    double* dbi = b.impl()->grad.data() + static_cast<int64_t>(i) * (trans_b ? n * k : k * n);
                    if (trans_b)
                        kernels::gemm_tn(n, k, m, dyi, ai, dbi, true);  // dB = dC^T * A
                    else
                        kernels::gemm_tn(k, n, m, ai, dyi, dbi, true);  // dB = A^T * dC
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {
thread_local std::vector<double> tl_col;
thread_local std::vector<double> tl_dcol;
thread_local std::vector<double> tl_wt;
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check(x.ndim() == 4 && w.ndim() == 4, "conv2d: need x[B,C,H,W], w[Co,C,kh,kw]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(w.dim(1) == C, "conv2d: channel mismatch");
    check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    const int oh = kernels::conv_out_dim(H, kh, stride, pad);
    const int ow = kernels::conv_out_dim(W, kw, stride, pad);
    check(oh > 0 && ow > 0, "conv2d: output would be empty");
    const int K = C * kh * kw;
    const int64_t P = static_cast<int64_t>(oh) * ow;
    Tensor out = empty_like_shape({B, Co, oh, ow});
    tl_col.resize(static_cast<size_t>(K) * P);
    for (int i = 0; i < B; ++i) {
        kernels::im2col(x.data() + static_cast<int64_t>(i) * C * H * W, C, H, W, kh, kw, stride, pad,
                        tl_col.data());
        double* yi = out.data() + static_cast<int64_t>(i) * Co * P;
        kernels::gemm(Co, static_cast<int>(P), K, w.data(), tl_col.data(), yi);
        if (b.defined()) {
            check(b.ndim() == 1 && b.dim(0) == Co, "conv2d: bias shape mismatch");
            for (int oc = 0; oc < Co; ++oc) {
                const double bv = b.data()[oc];
                double* row = yi + static_cast<int64_t>(oc) * P;
                for (int64_t p = 0; p < P; ++p) row[p] += bv;
            }
        }
    }
    if (detail::track({&x, &w, &b})) {
        detail::attach(
            out, "conv2d", b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w},
            [x, w, b, B, C, H, W, Co, kh, kw, stride, pad, K, P](const TensorImpl& o) {
                const bool need_x = needs(x.impl());
                const bool need_w = needs(w.impl());
                if (need_x) x.impl()->ensure_grad();
                if (need_w) w.impl()->ensure_grad();
                if (need_x) {
                    // W^T materialized once: [K, Co]
                    tl_wt.resize(static_cast<size_t>(K) * Co);
                    kernels::transpose(Co, K, w.data(), tl_wt.data());
                }
                tl_col.resize(static_cast<size_t>(K) * P);
                tl_dcol.resize(static_cast<size_t>(K) * P);
                for (int i = 0; i < B; ++i) {
                    const double* dyi = o.grad.data() + static_cast<int64_t>(i) * Co * P;
                    if (need_w) {
                        kernels::im2col(x.data() + static_cast<int64_t>(i) * C * H * W, C, H, W, kh, kw,
                                        stride, pad, tl_col.data());
                        kernels::gemm_nt(Co, K, static_cast<int>(P), dyi, tl_col.data(),
                                         w.impl()->grad.data(), true);
                    }
                    if (need_x) {
                        kernels::gemm(K, static_cast<int>(P), Co, tl_wt.data(), dyi, tl_dcol.data());
                        kernels::col2im(tl_dcol.data(), C, H, W, kh, kw, stride, pad,
                                        x.impl()->grad.data() + static_cast<int64_t>(i) * C * H * W);
                    }
                }
                if (b.defined() && needs(b.impl())) {
                    b.impl()->ensure_grad();
                    double* db = b.impl()->grad.data();
                    for (int i = 0; i < B; ++i) {
                        const double* dyi = o.grad.data() + static_cast<int64_t>(i) * Co * P;
                        for (int oc = 0; oc < Co; ++oc) {
                            double s = 0.0;
                            const double* row = dyi + static_cast<int64_t>(oc) * P;
                            for (int64_t p = 0; p < P; ++p) s += row[p];
                            db[oc] += s;
                        }
                    }
                }
            });
    }
    return out;
}

Tensor upsample_nearest2(const Tensor& x) {
    check(x.ndim() == 4, "upsample_nearest2: need [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out = empty_like_shape({B, C, 2 * H, 2 * W});
    for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const double* src = x.data() + bc * H * W;
        double* dst = out.data() + bc * 4 * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const double v = src[static_cast<int64_t>(i) * W + j];
                double* d0 = dst + (static_cast<int64_t>(2 * i) * 2 * W + 2 * j);
                d0[0] = v;
                d0[1] = v;
                d0[2 * W] = v;
                d0[2 * W + 1] = v;
            }
    }
    if (detail::track({&x})) {
        detail::attach(out, "upsample_nearest2", {x}, [x, B, C, H, W](const TensorImpl& o) {
            if (!needs(x.impl())) return;
            x.impl()->ensure_grad();
            for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
                double* dx = x.impl()->grad.data() + bc * H * W;
                const double* dy = o.grad.data() + bc * 4 * H * W;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        const double* s0 = dy + (static_cast<int64_t>(2 * i) * 2 * W + 2 * j);
                        dx[static_cast<int64_t>(i) * W + j] += s0[0] + s0[1] + s0[2 * W] + s0[2 * W + 1];
                    }
            }
        });
    }
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& v) {
    check(x.ndim() == 4 && v.ndim() == 2, "add_channel_bias: need x[B,C,H,W], v[B,C]");
    check(x.dim(0) == v.dim(0) && x.dim(1) == v.dim(1), "add_channel_bias: B/C mismatch");
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor out = empty_like_shape(x.shape());
    for (int64_t bc = 0; bc < v.numel(); ++bc) {
        const double bias = v.data()[bc];
        const double* src = x.data() + bc * hw;
        double* dst = out.data() + bc * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }
    if (detail::track({&x, &v})) {
        detail::attach(out, "add_channel_bias", {x, v}, [x, v, hw](const TensorImpl& o) {
            if (needs(x.impl())) {
                x.impl()->ensure_grad();
                kernels::vec_axpy(o.numel(), 1.0, o.grad.data(), x.impl()->grad.data());
            }
            if (needs(v.impl())) {
                v.impl()->ensure_grad();
                double* dv = v.impl()->grad.data();
                for (int64_t bc = 0; bc < v.numel(); ++bc) {
                    double s = 0.0;
                    const double* dy = o.grad.data() + bc * hw;
                    for (int64_t i = 0; i < hw; ++i) s += dy[i];
                    dv[bc] += s;
                }
            }
        });
    }
    return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& v) {
    check(x.ndim() == 4 && v.ndim() == 2, "scale_channels: need x[B,C,H,W], v[B,C]");
    check(x.dim(0) == v.dim(0) && x.dim(1) == v.dim(1), "scale_channels: B/C mismatch");
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    Tensor out = empty_like_shape(x.shape());
    for (int64_t bc = 0; bc < v.numel(); ++bc) {
        const double s = v.data()[bc];
        const double* src = x.data() + bc * hw;
        double* dst = out.data() + bc * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
    }
    if (detail::track({&x, &v})) {
        detail::attach(out, "scale_channels", {x, v}, [x, v, hw](const TensorImpl& o) {
            if (needs(x.impl())) {
                x.impl()->ensure_grad();
                double* dx = x.impl()->grad.data();
                for (int64_t bc = 0; bc < v.numel(); ++bc) {
                    const double s = v.data()[bc];
                    const double* dy = o.grad.data() + bc * hw;
                    double* dxr = dx + bc * hw;
                    for (int64_t i = 0; i < hw; ++i) dxr[i] += dy[i] * s;
                }
            }
            if (needs(v.impl())) {
                v.impl()->ensure_grad();
                double* dv = v.impl()->grad.data();
                for (int64_t bc = 0; bc < v.numel(); ++bc) {
                    const double* dy = o.grad.data() + bc * hw;
                    const double* xr = x.data() + bc * hw;
                    double s = 0.0;
                    for (int64_t i = 0; i < hw; ++i) s += dy[i] * xr[i];
                    dv[bc] += s;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

namespace {

// Shared machinery: normalize groups of `n` contiguous elements; gamma/beta
// indexed by a per-element channel map. Used by both layer_norm (rows) and
// group_norm (per-sample groups).
struct NormStats {
    std::vector<double> mean;
    std::vector<double> inv_std;
};

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int d = x.dim(-1);
    check(gamma.ndim() == 1 && gamma.dim(0) == d && beta.ndim() == 1 && beta.dim(0) == d,
          "layer_norm: gamma/beta must be [d]");
    const int64_t rows = x.numel() / d;
    Tensor out = empty_like_shape(x.shape());
    auto stats = std::make_shared<NormStats>();
    stats->mean.resize(rows);
    stats->inv_std.resize(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        stats->mean[r] = mu;
        stats->inv_std[r] = inv;
        double* yr = out.data() + r * d;
        for (int j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * inv * gamma.data()[j] + beta.data()[j];
    }
    if (detail::track({&x, &gamma, &beta})) {
        detail::attach(out, "layer_norm", {x, gamma, beta}, [x, gamma, beta, d, rows, stats](const TensorImpl& o) {
            const double* dy = o.grad.data();
            if (needs(gamma.impl())) gamma.impl()->ensure_grad();
            if (needs(beta.impl())) beta.impl()->ensure_grad();
            if (needs(x.impl())) x.impl()->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data() + r * d;
                const double* dyr = dy + r * d;
                const double mu = stats->mean[r], inv = stats->inv_std[r];
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - mu) * inv;
                    const double dxhat = dyr[j] * gamma.data()[j];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (needs(gamma.impl())) gamma.impl()->grad[j] += dyr[j] * xhat;
                    if (needs(beta.impl())) beta.impl()->grad[j] += dyr[j];
                }
                if (needs(x.impl())) {
                    double* dxr = x.impl()->grad.data() + r * d;
                    for (int j = 0; j < d; ++j) {
                        const double xhat = (xr[j] - mu) * inv;
                        const double dxhat = dyr[j] * gamma.data()[j];
                        dxr[j] += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / d);
                    }
                }
            }
        });
    }
    return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps) {
    check(x.ndim() == 4, "group_norm: need [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1);
    const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    check(groups >= 1 && C % groups == 0, "group_norm: C not divisible by groups");
    check(gamma.ndim() == 1 && gamma.dim(0) == C && beta.ndim() == 1 && beta.dim(0) == C,
          "group_norm: gamma/beta must be [C]");
    const int cg = C / groups;
    const int64_t gsize = cg * hw;
    Tensor out = empty_like_shape(x.shape());
    auto stats = std::make_shared<NormStats>();
    const int64_t ngroups = static_cast<int64_t>(B) * groups;
    stats->mean.resize(ngroups);
    stats->inv_std.resize(ngroups);
    for (int64_t g = 0; g < ngroups; ++g) {
        const double* xg = x.data() + g * gsize;
        double mu = 0.0;
        for (int64_t i = 0; i < gsize; ++i) mu += xg[i];
        mu /= static_cast<double>(gsize);
        double var = 0.0;
        for (int64_t i = 0; i < gsize; ++i) var += (xg[i] - mu) * (xg[i] - mu);
        var /= static_cast<double>(gsize);
        const double inv = 1.0 / std::sqrt(var + eps);
        stats->mean[g] = mu;
        stats->inv_std[g] = inv;
        const int c0 = static_cast<int>(g % groups) * cg;
        double* yg = out.data() + g * gsize;
        for (int c = 0; c < cg; ++c) {
            const double gm = gamma.data()[c0 + c], bt = beta.data()[c0 + c];
            for (int64_t i = 0; i < hw; ++i) yg[c * hw + i] = (xg[c * hw + i] - mu) * inv * gm + bt;
        }
    }
    if (detail::track({&x, &gamma, &beta})) {
        detail::attach(out, "group_norm", {x, gamma, beta},
                       [x, gamma, beta, groups, cg, hw, gsize, ngroups, stats](const TensorImpl& o) {
                           const bool ng = needs(gamma.impl());
                           const bool nb = needs(beta.impl());
                           const bool nx = needs(x.impl());
                           if (ng) gamma.impl()->ensure_grad();
                           if (nb) beta.impl()->ensure_grad();
                           if (nx) x.impl()->ensure_grad();
                           for (int64_t g = 0; g < ngroups; ++g) {
                               const double* xg = x.data() + g * gsize;
                               const double* dyg = o.grad.data() + g * gsize;
                               const double mu = stats->mean[g], inv = stats->inv_std[g];
                               const int c0 = static_cast<int>(g % groups) * cg;
                               double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                               for (int c = 0; c < cg; ++c) {
                                   const double gm = gamma.data()[c0 + c];
                                   double dg = 0.0, db = 0.0;
                                   for (int64_t i = 0; i < hw; ++i) {
                                       const double xhat = (xg[c * hw + i] - mu) * inv;
                                       const double dxhat = dyg[c * hw + i] * gm;
                                       sum_dxhat += dxhat;
                                       sum_dxhat_xhat += dxhat * xhat;
                                       dg += dyg[c * hw + i] * xhat;
                                       db += dyg[c * hw + i];
                                   }
                                   if (ng) gamma.impl()->grad[c0 + c] += dg;
                                   if (nb) beta.impl()->grad[c0 + c] += db;
                               }
                               if (nx) {
                                   double* dxg = x.impl()->grad.data() + g * gsize;
                                   const double n = static_cast<double>(gsize);
                                   for (int c = 0; c < cg; ++c) {
                                       const double gm = gamma.data()[c0 + c];
                                       for (int64_t i = 0; i < hw; ++i) {
                                           const double xhat = (xg[c * hw + i] - mu) * inv;
                                           const double dxhat = dyg[c * hw + i] * gm;
                                           dxg[c * hw + i] += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / n);
                                       }
                                   }
                               }
                           }
                       });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
    const int d = x.dim(-1);
    const int64_t rows = x.numel() / d;
    Tensor out = empty_like_shape(x.shape());
    kernels::softmax_rows(static_cast<int>(rows), d, x.data(), out.data());
    if (detail::track({&x})) {
        detail::attach(out, "softmax", {x}, [x, d, rows](const TensorImpl& o) {
            if (!needs(x.impl())) return;
            x.impl()->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * d;
                const double* dy = o.grad.data() + r * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += dy[j] * y[j];
                double* dx = x.impl()->grad.data() + r * d;
                for (int j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

Tensor log_softmax_lastdim(const Tensor& x) {
    const int d = x.dim(-1);
    const int64_t rows = x.numel() / d;
    Tensor out = empty_like_shape(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < d; ++j) sum += std::exp(xr[j] - mx);
        const double lse = mx + std::log(sum);
        double* yr = out.data() + r * d;
        for (int j = 0; j < d; ++j) yr[j] = xr[j] - lse;
    }
    if (detail::track({&x})) {
        detail::attach(out, "log_softmax", {x}, [x, d, rows](const TensorImpl& o) {
            if (!needs(x.impl())) return;
            x.impl()->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = o.value.data() + r * d;
                const double* dy = o.grad.data() + r * d;
                double sum_dy = 0.0;
                for (int j = 0; j < d; ++j) sum_dy += dy[j];
                double* dx = x.impl()->grad.data() + r * d;
                for (int j = 0; j < d; ++j) dx[j] += dy[j] - std::exp(y[j]) * sum_dy;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// indexing
// ---------------------------------------------------------------------------

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    check(table.ndim() == 2, "embedding: table must be 2D");
    const int V = table.dim(0), d = table.dim(1);
    for (int id : ids) check(id >= 0 && id < V, "embedding: id out of range");
    Tensor out = empty_like_shape({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * d, table.data() + static_cast<int64_t>(ids[i]) * d, sizeof(double) * d);
    if (detail::track({&table})) {
        detail::attach(out, "embedding", {table}, [table, ids, d](const TensorImpl& o) {
            if (!needs(table.impl())) return;
            table.impl()->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i)
                kernels::vec_axpy(d, 1.0, o.grad.data() + i * d,
                                  table.impl()->grad.data() + static_cast<int64_t>(ids[i]) * d);
        });
    }
    return out;
}

Tensor gather_cols(const Tensor& x, const std::vector<int>& idx) {
    check(x.ndim() == 2, "gather_cols: need 2D");
    const int m = x.dim(0), n = x.dim(1);
    check(static_cast<int>(idx.size()) == m, "gather_cols: index count mismatch");
    for (int j : idx) check(j >= 0 && j < n, "gather_cols: index out of range");
    Tensor out = empty_like_shape({m});
    for (int i = 0; i < m; ++i) out.data()[i] = x.data()[static_cast<int64_t>(i) * n + idx[i]];
    if (detail::track({&x})) {
        detail::attach(out, "gather_cols", {x}, [x, idx, m, n](const TensorImpl& o) {
            if (!needs(x.impl())) return;
            x.impl()->ensure_grad();
            for (int i = 0; i < m; ++i)
                x.impl()->grad[static_cast<int64_t>(i) * n + idx[i]] += o.grad[i];
        });
    }
    return out;
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    Tensor diff = sub(a, b);
    return mean_all(mul(diff, diff));
}

}  // namespace navlab::nd
