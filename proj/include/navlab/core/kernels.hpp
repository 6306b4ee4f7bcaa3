#pragma once

#include <cstdint>

#include "navlab/core/parallel.hpp"

namespace navlab::kernels {

// Dense kernels in row-major layout. Each has a serial reference version and
// an OpenMP version; `gemm` etc. dispatch on the active backend. The serial
// versions are the ground truth the parallel ones are tested against, and the
// bench tool compares their throughput.

// C[m,n] = A[m,k] * B[k,n]  (accumulate: C += A*B)
void gemm_serial(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm_omp(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate = false);

// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate = false);
// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate = false);

// out[cols,rows] = in[rows,cols]^T
void transpose(int rows, int cols, const double* in, double* out);

// im2col for NCHW convolution. col has shape [C*kh*kw, oh*ow].
void im2col(const double* im, int c, int h, int w, int kh, int kw, int stride, int pad, double* col);
// scatter-add transpose of im2col; `im` must be zeroed by the caller.
void col2im(const double* col, int c, int h, int w, int kh, int kw, int stride, int pad, double* im);

// Direct convolution, serial. Reference implementation used by the tests to
// validate the im2col+gemm path. y[co, oh, ow].
void conv2d_direct_serial(const double* x, int c, int h, int w, const double* weight, int co, int kh,
                          int kw, int stride, int pad, const double* bias, double* y);

inline int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// y = softmax(x) row-wise over [rows, cols]
void softmax_rows_serial(int rows, int cols, const double* x, double* y);
void softmax_rows_omp(int rows, int cols, const double* x, double* y);
void softmax_rows(int rows, int cols, const double* x, double* y);

// elementwise helpers (serial: these are cheap relative to gemm)
void vec_add(int64_t n, const double* a, const double* b, double* y);
void vec_axpy(int64_t n, double alpha, const double* x, double* y);  // y += alpha*x

}  // namespace navlab::kernels
