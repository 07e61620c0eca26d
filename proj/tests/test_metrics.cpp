#include <cmath>
#include <set>

#include "doctest.h"
#include "mtid/error.hpp"
#include "mtid/metrics.hpp"
#include "mtid/rng.hpp"

using namespace mtid;
using namespace mtid::metrics;

namespace {

// Brute-force references written without the library's helpers.
double ref_sr(const std::vector<Plan>& p, const std::vector<Plan>& g) {
  int hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool all = true;
    for (std::size_t t = 0; t < p[i].size(); ++t) all = all && p[i][t] == g[i][t];
    hit += all;
  }
  return static_cast<double>(hit) / p.size();
}

double ref_macc(const std::vector<Plan>& p, const std::vector<Plan>& g) {
  int hit = 0, n = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t t = 0; t < p[i].size(); ++t, ++n) hit += p[i][t] == g[i][t];
  return static_cast<double>(hit) / n;
}

double ref_miou(const std::vector<Plan>& p, const std::vector<Plan>& g) {
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    int inter = 0, uni = 0;
    for (int a = 0; a < 64; ++a) {
      const bool in_p = std::count(p[i].begin(), p[i].end(), a) > 0;
      const bool in_g = std::count(g[i].begin(), g[i].end(), a) > 0;
      inter += in_p && in_g;
      uni += in_p || in_g;
    }
    acc += static_cast<double>(inter) / uni;
  }
  return acc / p.size();
}

}  // namespace

TEST_CASE("definitions on small cases") {
  const std::vector<Plan> gt = {{1, 2, 3}, {4, 5, 6}};
  CHECK(success_rate(gt, gt) == 1.0);
  CHECK(success_rate({{1, 2, 3}, {4, 5, 7}}, gt) == 0.5);
  CHECK(mean_accuracy({{1, 2, 4}}, {{1, 2, 3}}) == doctest::Approx(2.0 / 3.0));
  CHECK(mean_iou({{1, 2, 4}}, {{1, 2, 3}}) == 0.5);
  CHECK(mean_iou({{3, 1, 2}}, {{1, 2, 3}}) == 1.0);
  CHECK(success_rate({{3, 1, 2}}, {{1, 2, 3}}) == 0.0);
  CHECK_THROWS_AS(success_rate({}, {}), Error);
  CHECK_THROWS_AS(mean_accuracy({}, {}), Error);
  CHECK_THROWS_AS(mean_iou({{1, 2}}, {{1, 2, 3}}), Error);
  CHECK_THROWS_AS(success_rate({{1, 2, 3}}, {{1, 2, 3}, {1, 2, 3}}), Error);
}

TEST_CASE("agreement with brute force on random plan pairs") {
  Rng rng(1);
  std::vector<Plan> p, g;
  for (int i = 0; i < 1000; ++i) {
    const int T = rng.uniform_int(3, 6);
    Plan a, b;
    for (int t = 0; t < T; ++t) {
      a.push_back(rng.uniform_int(0, 5));
      b.push_back(rng.uniform() < 0.6 ? a.back() : rng.uniform_int(0, 5));
    }
    p.push_back(a);
    g.push_back(b);
  }
  CHECK(success_rate(p, g) == ref_sr(p, g));
  CHECK(mean_accuracy(p, g) == ref_macc(p, g));
  CHECK(mean_iou(p, g) == ref_miou(p, g));
  const auto r = evaluate_plans(p, g);
  CHECK(r.sr <= r.macc);
  CHECK(r.per_horizon.size() == 4);
}

TEST_CASE("per-sequence mIoU differs from the pooled batch form") {
  // IoU 1/1 on a small union and 1/5 on a large one.
  const std::vector<Plan> gt = {{1, 1, 1}, {1, 2, 3}};
  const std::vector<Plan> pred = {{1, 1, 1}, {3, 4, 5}};
  CHECK(mean_iou(pred, gt) == doctest::Approx((1.0 + 1.0 / 5.0) / 2));
  CHECK(pooled_iou(pred, gt) == doctest::Approx(2.0 / 6.0));
  CHECK(mean_iou(pred, gt) != doctest::Approx(pooled_iou(pred, gt)));
}

TEST_CASE("random planning over a large vocabulary almost never succeeds") {
  Rng rng(2);
  std::vector<Plan> p, g;
  for (int i = 0; i < 5000; ++i) {
    Plan a, b;
    for (int t = 0; t < 3; ++t) {
      a.push_back(rng.uniform_int(0, 24));
      b.push_back(rng.uniform_int(0, 24));
    }
    p.push_back(a);
    g.push_back(b);
  }
  CHECK(success_rate(p, g) < 0.01);
}

TEST_CASE("uncertainty metrics") {
  SUBCASE("KL hand value") {
    const std::map<Plan, double> q = {{{1}, 0.5}, {{2}, 0.5}};
    const std::map<Plan, double> ph = {{{1}, 0.75}, {{2}, 0.25}};
    CHECK(kl_divergence(q, ph) == doctest::Approx(0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25)));
    CHECK(kl_divergence(q, ph) == doctest::Approx(0.1438).epsilon(1e-3));
  }
  SUBCASE("samples reproduce the single ground-truth plan") {
    const Plan p = {1, 2, 3};
    const auto r = uncertainty_metrics({{p, p, p, p}}, {p}, {0});
    CHECK(r.mode_prec == 1.0);
    CHECK(r.mode_rec == 1.0);
    CHECK(r.kl_div == doctest::Approx(0.0));
    CHECK(r.nll == doctest::Approx(0.0));
  }
  SUBCASE("two modes, samples cover one") {
    const Plan p1 = {1, 2, 3}, p2 = {1, 3, 4};
    const auto r = uncertainty_metrics({{p1, p1}, {p1, p1}}, {p1, p2}, {7, 7});
    CHECK(r.mode_rec == 0.5);
    CHECK(r.mode_prec == 1.0);
    CHECK(r.groups == 1);
    // smoothed p: p1 = 5/6, p2 = 1/6; q = (1/2, 1/2)
    CHECK(r.kl_div == doctest::Approx(0.5 * std::log(0.5 / (5.0 / 6)) + 0.5 * std::log(0.5 / (1.0 / 6))));
    CHECK(r.kl_div >= 0);
  }
  CHECK_THROWS_AS(uncertainty_metrics({{}}, {{1}}, {0}), Error);
}
