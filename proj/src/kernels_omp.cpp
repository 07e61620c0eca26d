#include <omp.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mtid/kernels.hpp"

namespace mtid::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 15;
}  // namespace

int max_threads() { return omp_get_max_threads(); }

namespace omp {

void gemm(Transpose ta, Transpose tb, GemmShape s, const Scalar* a,
          const Scalar* b, Scalar* c, bool accumulate) {
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int m = s.m, n = s.n, k = s.k;
  Eigen::Map<RowMajor> cm(c, m, n);
  if (!accumulate) cm.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  // Eigen's blocked product parallelizes itself with OpenMP.
  const bool at = ta == Transpose::kYes, bt = tb == Transpose::kYes;
  Eigen::Map<const RowMajor> am(a, at ? k : m, at ? m : k);
  Eigen::Map<const RowMajor> bm(b, bt ? n : k, bt ? k : n);
  if (!at && !bt) {
    cm.noalias() += am * bm;
  } else if (!at && bt) {
    cm.noalias() += am * bm.transpose();
  } else if (at && !bt) {
    cm.noalias() += am.transpose() * bm;
  } else {
    cm.noalias() += am.transpose() * bm.transpose();
  }
}

void im2col(const Scalar* x, int batch, int len, int channels, int kernel,
            int pad_left, int out_len, Scalar* col) {
  const int width = kernel * channels;
  const long work = static_cast<long>(batch) * out_len * width;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int bt = 0; bt < batch; ++bt) {
    for (int t = 0; t < out_len; ++t) {
      Scalar* row = col + static_cast<std::size_t>(bt * out_len + t) * width;
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad_left;
        Scalar* dst = row + j * channels;
        if (src < 0 || src >= len) {
          std::fill(dst, dst + channels, Scalar{0});
        } else {
          std::memcpy(dst, x + static_cast<std::size_t>(bt * len + src) * channels,
                      sizeof(Scalar) * channels);
        }
      }
    }
  }
}

void col2im_add(const Scalar* col, int batch, int len, int channels,
                int kernel, int pad_left, int out_len, Scalar* x) {
  const int width = kernel * channels;
  const long work = static_cast<long>(batch) * out_len * width;
  // Parallel over batch items only: different t within one item write the
  // same destination rows.
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int bt = 0; bt < batch; ++bt) {
    for (int t = 0; t < out_len; ++t) {
      const Scalar* row = col + static_cast<std::size_t>(bt * out_len + t) * width;
      for (int j = 0; j < kernel; ++j) {
        const int dst = t + j - pad_left;
        if (dst < 0 || dst >= len) continue;
        Scalar* xr = x + static_cast<std::size_t>(bt * len + dst) * channels;
        const Scalar* src = row + j * channels;
#pragma omp simd
        for (int ch = 0; ch < channels; ++ch) xr[ch] += src[ch];
      }
    }
  }
}

void softmax_rows(Scalar* x, int rows, int cols) {
  const long work = static_cast<long>(rows) * cols * 8;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int r = 0; r < rows; ++r) {
    Scalar* row = x + static_cast<std::size_t>(r) * cols;
    const Scalar mx = *std::max_element(row, row + cols);
    Scalar sum = 0;
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const Scalar inv = 1 / sum;
    for (int c = 0; c < cols; ++c) row[c] *= inv;
  }
}

}  // namespace omp
}  // namespace mtid::kernels
