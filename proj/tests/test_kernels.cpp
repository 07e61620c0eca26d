#include <array>
#include <vector>

#include "doctest.h"
#include "mtid/kernels.hpp"
#include "mtid/rng.hpp"

using namespace mtid;
using namespace mtid::kernels;

namespace {
std::vector<Scalar> random_vec(std::size_t n, Rng& rng) {
  std::vector<Scalar> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Scalar max_diff(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  Scalar m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST_CASE("parallel gemm matches the serial reference for every transpose combination") {
  Rng rng(7);
  for (auto [m, n, k] : std::vector<std::array<int, 3>>{{1, 1, 1}, {3, 5, 7}, {96, 64, 40}, {17, 130, 33}}) {
    for (auto ta : {Transpose::kNo, Transpose::kYes}) {
      for (auto tb : {Transpose::kNo, Transpose::kYes}) {
        for (bool acc : {false, true}) {
          auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
          auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
          auto c0 = random_vec(static_cast<std::size_t>(m) * n, rng);
          auto c1 = c0;
          serial::gemm(ta, tb, {m, n, k}, a.data(), b.data(), c0.data(), acc);
          omp::gemm(ta, tb, {m, n, k}, a.data(), b.data(), c1.data(), acc);
          CHECK(max_diff(c0, c1) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("im2col and col2im agree across implementations and are adjoint") {
  Rng rng(3);
  const int batch = 4, len = 5, ch = 3, kernel = 2;
  for (auto [pl, pr] : std::vector<std::pair<int, int>>{{0, 1}, {1, 0}, {1, 1}, {0, 0}}) {
    const int out_len = len + pl + pr - kernel + 1;
    auto x = random_vec(static_cast<std::size_t>(batch) * len * ch, rng);
    std::vector<Scalar> c0(static_cast<std::size_t>(batch) * out_len * kernel * ch), c1(c0.size());
    serial::im2col(x.data(), batch, len, ch, kernel, pl, out_len, c0.data());
    omp::im2col(x.data(), batch, len, ch, kernel, pl, out_len, c1.data());
    CHECK(max_diff(c0, c1) == 0);

    // <im2col(x), y> == <x, col2im(y)>
    auto y = random_vec(c0.size(), rng);
    std::vector<Scalar> back0(x.size(), 0), back1(x.size(), 0);
    serial::col2im_add(y.data(), batch, len, ch, kernel, pl, out_len, back0.data());
    omp::col2im_add(y.data(), batch, len, ch, kernel, pl, out_len, back1.data());
    CHECK(max_diff(back0, back1) < 1e-12);
    Scalar lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += c0[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back0[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows sum to one in both implementations") {
  Rng rng(11);
  auto x = random_vec(6 * 9, rng);
  for (auto& v : x) v *= 20;
  auto y = x;
  serial::softmax_rows(x.data(), 6, 9);
  omp::softmax_rows(y.data(), 6, 9);
  CHECK(max_diff(x, y) < 1e-14);
  for (int r = 0; r < 6; ++r) {
    Scalar s = 0;
    for (int c = 0; c < 9; ++c) s += y[r * 9 + c];
    CHECK(s == doctest::Approx(1).epsilon(1e-12));
  }
}
