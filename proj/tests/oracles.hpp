#pragma once

// Test-only oracles: finite differences and brute-force reference helpers.
// Nothing here calls into the code paths these helpers are used to check.

#include <cmath>
#include <functional>

#include "mtid/nn/autograd.hpp"
#include "mtid/rng.hpp"

namespace mtid::testing {

using nn::Tensor;
using nn::Var;

inline Tensor random_tensor(int rows, int cols, Rng& rng, Scalar scale = 1) {
  Tensor t(rows, cols);
  for (auto& v : t.vec()) v = scale * rng.normal();
  return t;
}

/// Central differences of a scalar function with respect to every entry of
/// `param` (perturbed in place and restored).
inline Tensor finite_difference(Var& param, const std::function<Scalar()>& loss, Scalar h = 1e-5) {
  Tensor g = Tensor::like(param.value());
  Tensor& w = param.mutable_value();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Scalar orig = w[i];
    w[i] = orig + h;
    const Scalar up = loss();
    w[i] = orig - h;
    const Scalar down = loss();
    w[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline Scalar relative_error(const Tensor& a, const Tensor& b) {
  Scalar diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const Scalar denom = std::sqrt(std::max(na, nb));
  return denom == 0 ? 0 : std::sqrt(diff) / denom;
}

}  // namespace mtid::testing
