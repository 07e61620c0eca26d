#include <functional>
#include <vector>

#include "doctest.h"
#include "mtid/error.hpp"
#include "mtid/nn/layers.hpp"
#include "mtid/nn/ops.hpp"
#include "oracles.hpp"

using namespace mtid;
using namespace mtid::nn;
using mtid::testing::finite_difference;
using mtid::testing::random_tensor;
using mtid::testing::relative_error;

namespace {

// Checks d/d(inputs) of sum(f(inputs) * probe) against central differences.
void check_gradients(std::vector<Var> inputs, const std::function<Var(const std::vector<Var>&)>& f,
                     Scalar tol = 1e-6) {
  Rng rng(99);
  Tensor probe;
  auto loss_var = [&]() {
    Var out = f(inputs);
    if (probe.empty()) probe = random_tensor(out.rows(), out.cols(), rng);
    return sum(mul(out, constant(probe)));
  };
  for (auto& in : inputs) in.zero_grad();
  Var loss = loss_var();
  loss.backward();
  for (auto& in : inputs) {
    Tensor analytic = in.grad().empty() ? Tensor::like(in.value()) : in.grad();
    Tensor numeric = finite_difference(in, [&] {
      NoGradGuard ng;
      return loss_var().item();
    });
    CHECK(relative_error(analytic, numeric) < tol);
  }
}

Var param(int r, int c, Rng& rng, Scalar scale = 1) { return Var(random_tensor(r, c, rng, scale), true); }

}  // namespace

TEST_CASE("elementwise and structural ops have correct gradients") {
  Rng rng(1);
  check_gradients({param(3, 4, rng), param(4, 5, rng)}, [](auto& v) { return matmul(v[0], v[1]); });
  check_gradients({param(3, 4, rng), param(4, 2, rng), param(1, 2, rng)},
                  [](auto& v) { return linear(v[0], v[1], v[2]); });
  check_gradients({param(3, 4, rng), param(3, 4, rng)}, [](auto& v) { return mul(add(v[0], v[1]), sub(v[0], v[1])); });
  check_gradients({param(3, 4, rng), param(1, 4, rng)}, [](auto& v) { return add_row(scale(v[0], 1.5), v[1]); });
  check_gradients({param(3, 4, rng)}, [](auto& v) { return mish(v[0]); });
  check_gradients({param(3, 4, rng)}, [](auto& v) { return sigmoid(v[0]); });
  check_gradients({param(6, 4, rng)}, [](auto& v) { return reshape(v[0], 4, 6); });
  check_gradients({param(3, 4, rng), param(3, 2, rng)},
                  [](auto& v) { return slice_cols(concat_cols(v[0], v[1]), 1, 5); });
  check_gradients({param(6, 3, rng)}, [](auto& v) { return take_strided_rows(v[0], 3, 1); });
  check_gradients({param(2, 3, rng)}, [](auto& v) { return repeat_rows(v[0], 4); });
  check_gradients({param(6, 3, rng)}, [](auto& v) { return mean_rows(v[0], 3); });
}

TEST_CASE("convolution, normalisation and attention gradients") {
  Rng rng(2);
  // batch 2, length 3, 4 -> 5 channels, kernel 3 same padding
  check_gradients({param(6, 4, rng), param(12, 5, rng), param(1, 5, rng)},
                  [](auto& v) { return conv1d(v[0], 3, v[1], v[2], 3, 1, 1); });
  // kernel 2 with asymmetric padding keeps the length
  check_gradients({param(6, 4, rng), param(8, 4, rng), param(1, 4, rng)},
                  [](auto& v) { return conv1d(v[0], 3, v[1], v[2], 2, 0, 1); });
  check_gradients({param(4, 6, rng), param(1, 6, rng), param(1, 6, rng)},
                  [](auto& v) { return layer_norm(v[0], v[1], v[2]); }, 1e-5);
  check_gradients({param(6, 8, rng), param(1, 8, rng), param(1, 8, rng)},
                  [](auto& v) { return group_norm(v[0], 3, 4, v[1], v[2]); }, 1e-5);
  check_gradients({param(6, 4, rng), param(8, 4, rng), param(8, 4, rng)},
                  [](auto& v) { return attention(v[0], v[1], v[2], 3, 4, 2, 0.5); });
  check_gradients({param(2, 5, rng), param(2, 5, rng), param(3, 5, rng)},
                  [](auto& v) { return blend(v[0], v[1], v[2]); });
}

TEST_CASE("losses have correct gradients") {
  Rng rng(3);
  Tensor target = random_tensor(3, 4, rng);
  Tensor weights = random_tensor(3, 4, rng);
  for (auto& w : weights.vec()) w = std::abs(w);
  check_gradients({param(3, 4, rng)}, [&](auto& v) { return weighted_sq_error(v[0], target, weights); });
  const std::vector<int> labels{0, 2, 1};
  check_gradients({param(3, 3, rng)}, [&](auto& v) { return cross_entropy(v[0], labels); });
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(4);
  Var a = param(2, 2, rng);
  NoGradGuard guard;
  Var b = mish(a);
  CHECK_FALSE(b.requires_grad());
  CHECK(b.node()->parents.empty());
}

TEST_CASE("shape errors are reported") {
  Rng rng(5);
  CHECK_THROWS_AS(matmul(param(2, 3, rng), param(2, 3, rng)), Error);
  CHECK_THROWS_AS(add(param(2, 3, rng), param(3, 2, rng)), Error);
  CHECK_THROWS_AS(group_norm(param(6, 6, rng), 3, 4, param(1, 6, rng), param(1, 6, rng)), Error);
}

TEST_CASE("adam moves a quadratic toward its minimum") {
  ParamStore store;
  Var& x = store.add("x", Tensor(1, 3, 5.0));
  Adam opt(store);
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    Var loss = sum(mul(x, x));
    loss.backward();
    opt.step(0.05);
  }
  for (Scalar v : x.value().vec()) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("sinusoidal embedding is deterministic and bounded") {
  Tensor a = sinusoidal_embedding({0, 7, 49}, 16);
  Tensor b = sinusoidal_embedding({0, 7, 49}, 16);
  CHECK(a == b);
  CHECK(a(0, 0) == 0);
  CHECK(a(0, 8) == 1);
  for (Scalar v : a.vec()) CHECK(std::abs(v) <= 1);
}
