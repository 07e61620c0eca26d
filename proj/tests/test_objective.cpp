#include <cmath>

#include "doctest.h"
#include "mtid/error.hpp"
#include "mtid/nn/ops.hpp"
#include "mtid/objective.hpp"
#include "oracles.hpp"

using namespace mtid;
using namespace mtid::objective;
using mtid::testing::finite_difference;
using mtid::testing::random_tensor;
using mtid::testing::relative_error;

namespace {

// Direct evaluation of the ramp weight for step t (1-based).
double ramp(int t, int T, double w0) {
  const int half = (T + 1) / 2;
  return w0 + (1 - w0) * (std::min(t, T - t + 1) - 1) / static_cast<double>(half - 1);
}

ScopeRow scope_of(int A, std::initializer_list<int> ids) {
  ScopeRow r(A, false);
  for (int i : ids) r[i] = true;
  return r;
}

}  // namespace

TEST_CASE("gradient weights: hand values and closed form") {
  CHECK(gradient_weights(3, 10).w == std::vector<double>{10, 1, 10});
  CHECK(gradient_weights(4, 10).w == std::vector<double>{10, 1, 1, 10});
  CHECK(gradient_weights(5, 10).w == std::vector<double>{10, 5.5, 1, 5.5, 10});
  for (int T = 3; T <= 9; ++T)
    for (double w0 : {0.5, 2.0, 10.0}) {
      const auto w = gradient_weights(T, w0).w;
      CHECK(w.front() == w0);
      CHECK(w.back() == w0);
      for (int t = 1; t <= T; ++t) {
        CHECK(w[t - 1] == doctest::Approx(ramp(t, T, w0)).epsilon(1e-15));
        CHECK(w[t - 1] == w[T - t]);
      }
    }
  for (int T : {1, 2}) {
    try {
      gradient_weights(T, 10);
      FAIL("expected degenerate horizon");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kDegenerateHorizon);
    }
  }
  CHECK(both_sides_weights(5, 10).w == std::vector<double>{10, 1, 1, 1, 10});
  CHECK(uniform_weights(4).w == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("masked_init") {
  const ScopeRow scope = scope_of(10, {1, 4, 7});
  Rng rng(1);
  double sum = 0, sq = 0;
  long n = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const Tensor b = masked_init(scope, 3, rng);
    for (int t = 0; t < 3; ++t)
      for (int d = 0; d < 10; ++d) {
        if (!scope[d]) {
          CHECK_MESSAGE(b(t, d) == 0.0, "inactive column nonzero");
        } else {
          CHECK(b(t, d) != 0.0);
          sum += b(t, d);
          sq += b(t, d) * b(t, d);
          ++n;
        }
      }
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1) < 0.05);

  // full scope draws every column
  Rng a(2);
  const Tensor full = masked_init(ScopeRow(6, true), 4, a);
  for (double v : full.vec()) CHECK(v != 0.0);
  CHECK_THROWS_AS(masked_init(ScopeRow(6, false), 3, a), Error);
}

TEST_CASE("task_mask conventions") {
  const ScopeRow scope = scope_of(6, {2, 5});
  const Tensor m = task_mask(scope, 3, 2.0, MaskConvention::kPenalizeIrrelevant);
  for (int t = 0; t < 3; ++t) {
    const std::vector<double> row(m.row(t).begin(), m.row(t).end());
    CHECK(row == std::vector<double>{2, 2, 1, 2, 2, 1});
  }
  const Tensor lit = task_mask(scope, 3, 2.0, MaskConvention::kLiteral);
  for (int t = 0; t < 3; ++t) {
    const std::vector<double> row(lit.row(t).begin(), lit.row(t).end());
    CHECK(row == std::vector<double>{1, 1, 2, 1, 1, 2});
  }
  for (double v : task_mask(scope, 3, 1.0, MaskConvention::kPenalizeIrrelevant).vec()) CHECK(v == 1.0);
  for (double v : task_mask(scope, 3, 2.0, MaskConvention::kOff).vec()) CHECK(v == 1.0);
}

TEST_CASE("proximity loss") {
  const auto w = gradient_weights(3, 10);
  SUBCASE("hand value") {
    const Tensor target(3, 2);
    const Tensor pred(3, 2, {1, 0, 0, 1, 0, 0});
    CHECK(proximity_loss(pred, target, w, Tensor(3, 2, 1.0)) == 11.0);
  }
  Rng rng(3);
  const Tensor a = random_tensor(3, 6, rng), abar = random_tensor(3, 6, rng);
  const ScopeRow scope = scope_of(6, {0, 3});
  const Tensor m = task_mask(scope, 3, 2.0, MaskConvention::kPenalizeIrrelevant);
  SUBCASE("identity, non-negativity and linearity in the mask") {
    CHECK(proximity_loss(a, a, w, m) == 0.0);
    CHECK(proximity_loss(a, abar, w, m) > 0.0);
    Tensor m2 = m;
    for (auto& v : m2.vec()) v *= 2;
    CHECK(proximity_loss(a, abar, w, m2) == doctest::Approx(2 * proximity_loss(a, abar, w, m)).epsilon(1e-15));
  }
  SUBCASE("rho = 1 equals the unmasked loss bit-exactly") {
    const Tensor ones = task_mask(scope, 3, 1.0, MaskConvention::kPenalizeIrrelevant);
    CHECK(proximity_loss(a, abar, w, ones) == proximity_loss(a, abar, w, Tensor(3, 6, 1.0)));
    const nn::Var v(a, true);
    CHECK(proximity_loss(v, abar, loss_weight_matrix(w, {ones})).item() ==
          proximity_loss(v, abar, loss_weight_matrix(w, {Tensor(3, 6, 1.0)})).item());
  }
  SUBCASE("differentiable form: value and analytic gradient") {
    nn::Var v(a, true);
    const Tensor weights = loss_weight_matrix(w, {m});
    nn::Var loss = proximity_loss(v, abar, weights);
    CHECK(loss.item() == doctest::Approx(proximity_loss(a, abar, w, m)).epsilon(1e-14));
    loss.backward();
    Tensor analytic(3, 6);
    for (int t = 0; t < 3; ++t)
      for (int d = 0; d < 6; ++d) analytic(t, d) = 2 * w.w[t] * m(t, d) * (a(t, d) - abar(t, d));
    CHECK(relative_error(v.grad(), analytic) <= 1e-12);
    const Tensor numeric = finite_difference(v, [&] { return proximity_loss(v.value(), abar, w, m); });
    CHECK(relative_error(numeric, analytic) <= 1e-6);
  }
  CHECK_THROWS_AS(proximity_loss(Tensor(3, 2), Tensor(3, 3), w, Tensor(3, 2)), Error);
}

TEST_CASE("loss variant parsing") {
  CHECK(parse_loss_kind("mse") == LossKind::kMse);
  CHECK(parse_loss_kind("both-sides") == LossKind::kBothSides);
  CHECK(parse_loss_kind("gradient") == LossKind::kGradient);
  CHECK(parse_mask_convention("off") == MaskConvention::kOff);
  CHECK(parse_mask_convention("relevant-penalty") == MaskConvention::kPenalizeIrrelevant);
  CHECK(parse_mask_convention("literal") == MaskConvention::kLiteral);
  CHECK_THROWS_AS(parse_loss_kind("l1"), Error);
  CHECK(loss_weights(LossKind::kMse, 5, 10).w == std::vector<double>(5, 1.0));
}
