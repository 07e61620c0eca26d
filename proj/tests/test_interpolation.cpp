#include <algorithm>

#include "doctest.h"
#include "mtid/error.hpp"
#include "mtid/interpolation.hpp"
#include "oracles.hpp"

using namespace mtid;
using namespace mtid::interpolation;
using mtid::testing::finite_difference;
using mtid::testing::random_tensor;
using mtid::testing::relative_error;

namespace {

InterpolationConfig small_config(int M = 2) {
  InterpolationConfig c;
  c.count = M;
  c.refiner_layers = 2;
  c.refiner_heads = 2;
  return c;
}

}  // namespace

TEST_CASE("interpolation count follows the block layout") {
  UNetConfig u;
  CHECK(interpolation_count(u) == 14);
  u.levels = 1;
  u.multipliers = {1};
  u.blocks_per_level = 1;
  u.middle_blocks = 0;
  CHECK(interpolation_count(u) == 2);
  u.blocks_per_level = 0;
  CHECK_THROWS_AS(interpolation_count(u), Error);
}

TEST_CASE("encoder") {
  nn::ParamStore store;
  Rng rng(1);
  InterpolationModule m(store, small_config(), 8, rng);
  const Tensor v = random_tensor(2, 8, rng);
  auto [ls, lg] = m.encode(nn::constant(v), nn::constant(v));
  CHECK(ls.value() == lg.value());
  CHECK(ls.cols() == m.latent_dim());
  CHECK(ls.rows() == 2);
  CHECK_THROWS_AS(m.encode(nn::constant(Tensor(1, 7)), nn::constant(Tensor(1, 7))), Error);

  SUBCASE("finite-difference gradient of ||L_s||^2 wrt encoder weights") {
    const Tensor vs = random_tensor(1, 8, rng);
    auto loss = [&] {
      Var l = m.encode(nn::constant(vs), nn::constant(vs)).first;
      return nn::sum(nn::mul(l, l));
    };
    for (const char* name : {"interp.encoder.conv1.weight", "interp.encoder.conv2.weight", "interp.encoder.conv1.bias"}) {
      Var& p = *store.find(name);
      store.zero_grad();
      loss().backward();
      const Tensor analytic = p.grad();
      const Tensor numeric = finite_difference(p, [&] {
        nn::NoGradGuard g;
        return loss().item();
      });
      CHECK(relative_error(analytic, numeric) <= 1e-3);
    }
  }
}

TEST_CASE("interpolate") {
  nn::ParamStore store;
  Rng rng(2);
  InterpolationModule m(store, small_config(3), 2, rng);
  const Var ls = nn::constant(Tensor(1, 2, {0, 2}));
  const Var lg = nn::constant(Tensor(1, 2, {4, 6}));

  SUBCASE("W = 0, k = 0 gives midpoints") {
    m.w().mutable_value().fill(0);
    m.k().mutable_value().fill(0);
    const Tensor I = m.interpolate(ls, lg).value();
    for (int j = 0; j < 3; ++j) {
      CHECK(I(j, 0) == 2.0);
      CHECK(I(j, 1) == 4.0);
    }
  }
  SUBCASE("large pre-activation approaches L_g") {
    m.w().mutable_value().fill(0);
    m.k().mutable_value().fill(50);
    const Tensor I = m.interpolate(ls, lg).value();
    CHECK(I(1, 0) == doctest::Approx(4.0));
    CHECK(I(1, 1) == doctest::Approx(6.0));
  }
  SUBCASE("hand value with phi = 0.25") {
    m.w().mutable_value().fill(0);
    m.k().mutable_value().fill(std::log(0.25 / 0.75));
    const Tensor I = m.interpolate(ls, lg).value();
    CHECK(I(0, 0) == doctest::Approx(1.0));
    CHECK(I(0, 1) == doctest::Approx(3.0));
  }
  SUBCASE("phi is elementwise sigmoid(W * tau + k), strictly inside (0, 1)") {
    const Tensor W = m.w().value(), K = m.k().value(), tau = m.tau().value();
    const Tensor phi = m.phi().value();
    for (std::size_t i = 0; i < phi.size(); ++i) {
      CHECK(phi[i] == doctest::Approx(1 / (1 + std::exp(-(W[i] * tau[i] + K[i])))));
      CHECK(phi[i] > 0);
      CHECK(phi[i] < 1);
    }
  }
}

TEST_CASE("raw interpolations lie between the endpoints for any parameters") {
  nn::ParamStore store;
  Rng rng(3);
  InterpolationModule m(store, small_config(5), 6, rng);
  for (int trial = 0; trial < 20; ++trial) {
    m.w().mutable_value() = random_tensor(5, 6, rng, 3);
    m.k().mutable_value() = random_tensor(5, 6, rng, 3);
    m.tau().mutable_value() = random_tensor(5, 6, rng, 3);
    const Tensor a = random_tensor(2, 6, rng), b = random_tensor(2, 6, rng);
    const Tensor I = m.interpolate(nn::constant(a), nn::constant(b)).value();
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 6; ++c) {
        const int item = r / 5;
        CHECK(I(r, c) >= std::min(a(item, c), b(item, c)) - 1e-12);
        CHECK(I(r, c) <= std::max(a(item, c), b(item, c)) + 1e-12);
      }
  }
}

TEST_CASE("fixed strategies") {
  Rng rng(4);
  const Tensor a = random_tensor(1, 4, rng), b = random_tensor(1, 4, rng);
  auto run = [&](Strategy s, int M) {
    nn::ParamStore store;
    InterpolationConfig c = small_config(M);
    c.strategy = s;
    Rng r(5);
    InterpolationModule m(store, c, 4, r);
    return m.interpolate(nn::constant(a), nn::constant(b)).value();
  };
  const Tensor g = run(Strategy::kCopyGoal, 4);
  for (int j = 0; j < 4; ++j)
    for (int c = 0; c < 4; ++c) CHECK(g(j, c) == b(0, c));
  const Tensor t = run(Strategy::kCopySplit, 5);
  for (int j = 1; j <= 5; ++j)
    for (int c = 0; c < 4; ++c) CHECK(t(j - 1, c) == (2 * j <= 5 ? a(0, c) : b(0, c)));
  const Tensor lin = run(Strategy::kFixedLinear, 3);
  for (int c = 0; c < 4; ++c) CHECK(lin(1, c) == doctest::Approx(0.5 * (a(0, c) + b(0, c))));
}

TEST_CASE("tau initializers") {
  const Tensor c = initial_tau(TauInit::kConstant, 2, 5, 1.0, 0, 1);
  for (double v : c.vec()) CHECK(v == 1.0);
  const Tensor up = initial_tau(TauInit::kLinearIncreasing, 2, 5, 1.0, 1, 6);
  CHECK(up(0, 0) == 1.0);
  CHECK(up(1, 4) == 6.0);
  CHECK(up(0, 2) == 3.5);
  const Tensor down = initial_tau(TauInit::kLinearDecreasing, 1, 5, 1.0, 0, 1);
  CHECK(down(0, 0) == 1.0);
  CHECK(down(0, 4) == 0.0);
  const Tensor sq = initial_tau(TauInit::kSquare, 1, 5, 1.0, 0, 1);
  CHECK(sq(0, 2) == 0.25);
  const Tensor ud = initial_tau(TauInit::kUpThenDown, 1, 5, 1.0, 0, 1);
  CHECK(ud(0, 0) == 0.0);
  CHECK(ud(0, 2) == 1.0);
  CHECK(ud(0, 4) == 0.0);
  for (const char* name : {"constant", "linear_increasing", "linear_decreasing", "square", "up_then_down"}) {
    CHECK(to_string(parse_tau_init(name)) == name);
  }
}

TEST_CASE("refiner shape, determinism and gradient through tau") {
  for (int M : {2, 14}) {
    nn::ParamStore store;
    Rng rng(6);
    InterpolationModule m(store, small_config(M), 8, rng);
    const Var raw = nn::constant(random_tensor(3 * M, 8, rng));
    const Tensor f1 = m.refine(raw).value();
    CHECK(f1.rows() == 3 * M);
    CHECK(f1.cols() == 8);
    CHECK(m.refine(raw).value() == f1);
  }
  nn::ParamStore store;
  Rng rng(7);
  InterpolationModule m(store, small_config(2), 8, rng);
  m.w().mutable_value() = random_tensor(2, 8, rng);
  const Tensor vs = random_tensor(1, 8, rng), vg = random_tensor(1, 8, rng);
  const Tensor probe = random_tensor(2, 8, rng);
  auto loss = [&] { return nn::sum(nn::mul(m(nn::constant(vs), nn::constant(vg)), nn::constant(probe))); };
  store.zero_grad();
  loss().backward();
  for (Var* p : {&m.tau(), &m.w(), &m.k()}) {
    const Tensor analytic = p->grad();
    const Tensor numeric = finite_difference(*p, [&] {
      nn::NoGradGuard g;
      return loss().item();
    });
    CHECK(relative_error(analytic, numeric) <= 1e-3);
  }
}

TEST_CASE("component toggles and second interpolation") {
  Rng rng(8);
  const Tensor vs = random_tensor(2, 8, rng), vg = random_tensor(2, 8, rng);
  {
    nn::ParamStore store;
    InterpolationConfig c = small_config(4);
    c.use_encoder = false;
    c.use_refiner = false;
    InterpolationModule m(store, c, 8, rng);
    CHECK(store.size() == 3);  // W, k, tau only
    const Tensor f = m(nn::constant(vs), nn::constant(vg)).value();
    const Tensor i = m.interpolate(nn::constant(vs), nn::constant(vg)).value();
    CHECK(f == i);
  }
  {
    nn::ParamStore store;
    InterpolationConfig c = small_config(4);
    c.strategy = Strategy::kSecondPass;
    c.second_pass_index = 2;
    InterpolationModule m(store, c, 8, rng);
    const Tensor f = m(nn::constant(vs), nn::constant(vg)).value();
    CHECK(f.rows() == 8);
    c.second_pass_index = 3;
    nn::ParamStore s2;
    CHECK_THROWS_AS(InterpolationModule(s2, c, 8, rng), Error);
  }
}
