#pragma once

#include <cstddef>

#include "mtid/scalar.hpp"

// Dense inner loops used by the autograd ops. Every kernel exists twice:
// `omp::` is the OpenMP-parallel version the library calls, `serial::` is a
// straightforward reference kept for testing and benchmarking.
namespace mtid::kernels {

enum class Transpose { kNo, kYes };

struct GemmShape {
  int m = 0;  // rows of C
  int n = 0;  // cols of C
  int k = 0;  // contraction length
};

namespace serial {

/// C = op(A) * op(B) (+ C when accumulate). A is m x k (k x m if transposed),
/// B is k x n (n x k if transposed); everything row-major.
void gemm(Transpose ta, Transpose tb, GemmShape s, const Scalar* a,
          const Scalar* b, Scalar* c, bool accumulate);

void im2col(const Scalar* x, int batch, int len, int channels, int kernel,
            int pad_left, int out_len, Scalar* col);

void col2im_add(const Scalar* col, int batch, int len, int channels,
                int kernel, int pad_left, int out_len, Scalar* x);

void softmax_rows(Scalar* x, int rows, int cols);

}  // namespace serial

namespace omp {

void gemm(Transpose ta, Transpose tb, GemmShape s, const Scalar* a,
          const Scalar* b, Scalar* c, bool accumulate);

void im2col(const Scalar* x, int batch, int len, int channels, int kernel,
            int pad_left, int out_len, Scalar* col);

void col2im_add(const Scalar* col, int batch, int len, int channels,
                int kernel, int pad_left, int out_len, Scalar* x);

void softmax_rows(Scalar* x, int rows, int cols);

}  // namespace omp

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace mtid::kernels
