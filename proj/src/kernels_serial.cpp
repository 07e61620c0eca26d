#include <algorithm>
#include <cmath>

#include "mtid/kernels.hpp"

namespace mtid::kernels::serial {

void gemm(Transpose ta, Transpose tb, GemmShape s, const Scalar* a,
          const Scalar* b, Scalar* c, bool accumulate) {
  for (int i = 0; i < s.m; ++i) {
    for (int j = 0; j < s.n; ++j) {
      Scalar acc = 0;
      for (int p = 0; p < s.k; ++p) {
        const Scalar av = ta == Transpose::kNo ? a[i * s.k + p] : a[p * s.m + i];
        const Scalar bv = tb == Transpose::kNo ? b[p * s.n + j] : b[j * s.k + p];
        acc += av * bv;
      }
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + acc : acc;
    }
  }
}

void im2col(const Scalar* x, int batch, int len, int channels, int kernel,
            int pad_left, int out_len, Scalar* col) {
  const int width = kernel * channels;
  for (int bt = 0; bt < batch; ++bt) {
    for (int t = 0; t < out_len; ++t) {
      Scalar* row = col + static_cast<std::size_t>(bt * out_len + t) * width;
      for (int j = 0; j < kernel; ++j) {
        const int src = t + j - pad_left;
        for (int ch = 0; ch < channels; ++ch) {
          row[j * channels + ch] =
              (src >= 0 && src < len) ? x[(bt * len + src) * channels + ch] : 0;
        }
      }
    }
  }
}

void col2im_add(const Scalar* col, int batch, int len, int channels,
                int kernel, int pad_left, int out_len, Scalar* x) {
  const int width = kernel * channels;
  for (int bt = 0; bt < batch; ++bt) {
    for (int t = 0; t < out_len; ++t) {
      const Scalar* row = col + static_cast<std::size_t>(bt * out_len + t) * width;
      for (int j = 0; j < kernel; ++j) {
        const int dst = t + j - pad_left;
        if (dst < 0 || dst >= len) continue;
        for (int ch = 0; ch < channels; ++ch) {
          x[(bt * len + dst) * channels + ch] += row[j * channels + ch];
        }
      }
    }
  }
}

void softmax_rows(Scalar* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    Scalar* row = x + static_cast<std::size_t>(r) * cols;
    const Scalar mx = *std::max_element(row, row + cols);
    Scalar sum = 0;
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < cols; ++c) row[c] /= sum;
  }
}

}  // namespace mtid::kernels::serial
