#pragma once

#include <vector>

#include "mtid/nn/autograd.hpp"
#include "mtid/rng.hpp"

// Differentiable ops. Sequence activations are [batch * length, channels];
// ops that need the split take `length` explicitly.
namespace mtid::nn {

Var matmul(const Var& a, const Var& b);
/// x * w + bias (bias is 1 x out).
Var linear(const Var& x, const Var& w, const Var& bias);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
/// a [r, c] + b [1, c]
Var add_row(const Var& a, const Var& b);

Var relu(const Var& x);
Var mish(const Var& x);
Var sigmoid(const Var& x);

Var reshape(const Var& x, int rows, int cols);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, int begin, int end);
/// Rows {j, j + stride, j + 2*stride, ...}: picks item j out of every group.
Var take_strided_rows(const Var& x, int stride, int offset);
/// v [batch, c] -> [batch * length, c], each row repeated `length` times.
Var repeat_rows(const Var& v, int length);
/// Mean over each group of `length` consecutive rows: [batch * length, c] -> [batch, c].
Var mean_rows(const Var& x, int length);

Var sum(const Var& x);
Var mean(const Var& x);

/// 1-D convolution over the length axis. w is [kernel * in, out]; output
/// length is length + pad_left + pad_right - kernel + 1.
Var conv1d(const Var& x, int length, const Var& w, const Var& bias, int kernel,
           int pad_left, int pad_right);

/// Per-row layer normalisation with affine gamma/beta [1, c].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5);
/// Group normalisation over (length x channels/groups) per batch item.
Var group_norm(const Var& x, int length, int groups, const Var& gamma, const Var& beta,
               Scalar eps = 1e-5);

/// Scaled dot-product attention. q is [batch * q_len, d], k and v are
/// [batch * kv_len, d]; d is split evenly over `heads`.
Var attention(const Var& q, const Var& k, const Var& v, int q_len, int kv_len, int heads,
              Scalar scale);

/// Rowwise convex blend: out[b * m + j] = ls[b] + phi[j] * (lg[b] - ls[b]).
Var blend(const Var& ls, const Var& lg, const Var& phi);

/// Mean cross-entropy of logits [batch, classes] against integer labels.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

/// sum(weights * (x - target)^2) with constant target and weights.
Var weighted_sq_error(const Var& x, const Tensor& target, const Tensor& weights);

/// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, Scalar p, Rng& rng);

}  // namespace mtid::nn
