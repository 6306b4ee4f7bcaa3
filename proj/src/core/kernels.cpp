#include "navlab/core/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

namespace navlab::kernels {

namespace {

std::atomic<Backend> g_backend{[] {
    if (const char* env = std::getenv("NAVLAB_BACKEND")) {
        if (std::string(env) == "serial") return Backend::serial;
    }
    return Backend::openmp;
}()};

}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

bool parallel_ok() { return backend() == Backend::openmp && !omp_in_parallel(); }

int hardware_threads() { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// gemm
// ---------------------------------------------------------------------------

namespace {

// One output row: c[i,:] = (acc ? c[i,:] : 0) + sum_p a[i,p] * b[p,:]
// The j-loop vectorizes without reassociating any reduction, so results do
// not depend on the backend or thread count.
inline void gemm_row(int n, int k, const double* arow, const double* b, double* crow, bool accumulate) {
    if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
    for (int p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<int64_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

thread_local std::vector<double> tl_scratch_a;
thread_local std::vector<double> tl_scratch_b;

}  // namespace

void gemm_serial(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    for (int i = 0; i < m; ++i)
        gemm_row(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, accumulate);
}

void gemm_omp(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        gemm_row(n, k, a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, accumulate);
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    // Parallelism only pays off once the row work is nontrivial.
    if (parallel_ok() && m > 1 && static_cast<int64_t>(m) * n * k >= 16384)
        gemm_omp(m, n, k, a, b, c, accumulate);
    else
        gemm_serial(m, n, k, a, b, c, accumulate);
}

void transpose(int rows, int cols, const double* in, double* out) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<int64_t>(j) * rows + i] = in[static_cast<int64_t>(i) * cols + j];
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    // B is [n,k]; materialize B^T once and run the fast row kernel.
    tl_scratch_b.resize(static_cast<size_t>(k) * n);
    transpose(n, k, b, tl_scratch_b.data());
    gemm(m, n, k, a, tl_scratch_b.data(), c, accumulate);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
    // A is [k,m]; materialize A^T.
    tl_scratch_a.resize(static_cast<size_t>(m) * k);
    transpose(k, m, a, tl_scratch_a.data());
    gemm(m, n, k, tl_scratch_a.data(), b, c, accumulate);
}

// ---------------------------------------------------------------------------
// convolution support
// ---------------------------------------------------------------------------

void im2col(const double* im, int c, int h, int w, int kh, int kw, int stride, int pad, double* col) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(w, kw, stride, pad);
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch) {
        const double* imc = im + static_cast<int64_t>(ch) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                double* dst = col + ((static_cast<int64_t>(ch) * kh + ki) * kw + kj) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + static_cast<int64_t>(oy) * ow, 0, sizeof(double) * ow);
                        continue;
                    }
                    const double* src = imc + static_cast<int64_t>(iy) * w;
                    double* drow = dst + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        drow[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int c, int h, int w, int kh, int kw, int stride, int pad, double* im) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(w, kw, stride, pad);
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    for (int ch = 0; ch < c; ++ch) {
        double* imc = im + static_cast<int64_t>(ch) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const double* src = col + ((static_cast<int64_t>(ch) * kh + ki) * kw + kj) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    double* drow = imc + static_cast<int64_t>(iy) * w;
                    const double* srow = src + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

void conv2d_direct_serial(const double* x, int c, int h, int w, const double* weight, int co, int kh,
                          int kw, int stride, int pad, const double* bias, double* y) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(w, kw, stride, pad);
    for (int oc = 0; oc < co; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias ? bias[oc] : 0.0;
                for (int ic = 0; ic < c; ++ic) {
                    for (int ki = 0; ki < kh; ++ki) {
                        const int iy = oy * stride - pad + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int kj = 0; kj < kw; ++kj) {
                            const int ix = ox * stride - pad + kj;
                            if (ix < 0 || ix >= w) continue;
                            acc += x[(static_cast<int64_t>(ic) * h + iy) * w + ix] *
                                   weight[((static_cast<int64_t>(oc) * c + ic) * kh + ki) * kw + kj];
                        }
                    }
                }
                y[(static_cast<int64_t>(oc) * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

namespace {

inline void softmax_row(int cols, const double* x, double* y) {
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
}

}  // namespace

void softmax_rows_serial(int rows, int cols, const double* x, double* y) {
    for (int i = 0; i < rows; ++i)
        softmax_row(cols, x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols);
}

void softmax_rows_omp(int rows, int cols, const double* x, double* y) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
        softmax_row(cols, x + static_cast<int64_t>(i) * cols, y + static_cast<int64_t>(i) * cols);
}

void softmax_rows(int rows, int cols, const double* x, double* y) {
    if (parallel_ok() && rows >= 64)
        softmax_rows_omp(rows, cols, x, y);
    else
        softmax_rows_serial(rows, cols, x, y);
}

void vec_add(int64_t n, const double* a, const double* b, double* y) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void vec_axpy(int64_t n, double alpha, const double* x, double* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace navlab::kernels
