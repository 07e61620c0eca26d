#include "mtid/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mtid/error.hpp"

namespace mtid::diffusion {

namespace {

void check_step(int n, const NoiseSchedule& s, int lo = 1) {
  if (n < lo || n > s.steps) {
    throw Error(Errc::kOutOfRange, "diffusion step " + std::to_string(n) + " outside [" + std::to_string(lo) + ", " +
                                       std::to_string(s.steps) + "]");
  }
}

void check_shape(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw Error(Errc::kShapeMismatch, a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

double NoiseSchedule::alpha_bar(int n) const {
  if (n == 0) return 1.0;
  check_step(n, *this);
  return cumulative[n - 1];
}

double cosine_curve(double n, int steps, double offset) {
  const double c = std::cos(((n / steps + offset) / (1.0 + offset)) * std::numbers::pi / 2.0);
  return c * c;
}

NoiseSchedule cosine_schedule(int steps, double offset) {
  if (steps < 2) throw Error(Errc::kScheduleTooShort, "need at least 2 steps, got " + std::to_string(steps));
  if (!(offset > 0)) throw Error(Errc::kInvalidArgument, "cosine offset must be positive");
  NoiseSchedule s;
  s.steps = steps;
  s.offset = offset;
  const double f0 = cosine_curve(0, steps, offset);
  double prev = 1.0, acc = 1.0;
  for (int n = 1; n <= steps; ++n) {
    const double cur = cosine_curve(n, steps, offset) / f0;
    const double b = std::min(1.0 - cur / prev, kBetaMax);
    prev = cur;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    acc *= 1.0 - b;
    s.cumulative.push_back(acc);
  }
  return s;
}

Tensor forward_diffuse(const Tensor& x0, int n, const Tensor& eps, const NoiseSchedule& sched) {
  check_shape(x0, eps);
  check_step(n, sched);
  const double ab = sched.alpha_bar(n);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out = Tensor::like(x0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor ddim_jump(const Tensor& xn, int n, int m, const Tensor& predicted_noise, const NoiseSchedule& sched) {
  check_shape(xn, predicted_noise);
  check_step(n, sched);
  if (m < 0 || m >= n) throw Error(Errc::kOutOfRange, "ddim target step must be in [0, n)");
  const double ab_n = sched.alpha_bar(n), ab_m = sched.alpha_bar(m);
  const double sn = std::sqrt(ab_n), rn = std::sqrt(1.0 - ab_n);
  const double sm = std::sqrt(ab_m), rm = std::sqrt(1.0 - ab_m);
  Tensor out = Tensor::like(xn);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double f = predicted_noise[i];
    out[i] = sm * ((xn[i] - rn * f) / sn) + rm * f;
  }
  return out;
}

Tensor ddim_step(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched) {
  check_step(n, sched);
  return ddim_jump(xn, n, n - 1, predicted_noise, sched);
}

Tensor ddpm_mean(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched) {
  check_shape(xn, predicted_noise);
  check_step(n, sched);
  const double ab_n = sched.alpha_bar(n), ab_p = sched.alpha_bar(n - 1);
  const double beta = sched.beta[n - 1], alpha = sched.alpha[n - 1];
  const double c0 = beta * std::sqrt(ab_p) / (1.0 - ab_n);
  const double cn = (1.0 - ab_p) * std::sqrt(alpha) / (1.0 - ab_n);
  const double sn = std::sqrt(ab_n), rn = std::sqrt(1.0 - ab_n);
  Tensor out = Tensor::like(xn);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (xn[i] - rn * predicted_noise[i]) / sn;
    out[i] = c0 * x0 + cn * xn[i];
  }
  return out;
}

double ddpm_variance(int n, const NoiseSchedule& sched) {
  check_step(n, sched);
  return sched.beta[n - 1] * (1.0 - sched.alpha_bar(n - 1)) / (1.0 - sched.alpha_bar(n));
}

Tensor ddpm_step(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched, Rng& rng) {
  Tensor out = ddpm_mean(xn, n, predicted_noise, sched);
  const double sd = std::sqrt(ddpm_variance(n, sched));
  if (sd > 0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sd * rng.normal();
  return out;
}

Tensor implied_noise(const Tensor& xn, const Tensor& x0_prediction, int n, const NoiseSchedule& sched) {
  check_shape(xn, x0_prediction);
  if (n == 0) throw Error(Errc::kOutOfRange, "implied noise undefined at step 0 (alpha_bar = 1)");
  check_step(n, sched);
  const double ab = sched.alpha_bar(n);
  if (!(ab < 1.0)) throw Error(Errc::kOutOfRange, "implied noise undefined when alpha_bar = 1");
  const double sn = std::sqrt(ab), rn = std::sqrt(1.0 - ab);
  Tensor out = Tensor::like(xn);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (xn[i] - sn * x0_prediction[i]) / rn;
  return out;
}

std::vector<int> sampling_steps(int total_steps, int sampler_steps) {
  if (total_steps < 1) throw Error(Errc::kInvalidArgument, "schedule has no steps");
  if (sampler_steps < 1 || sampler_steps > total_steps) {
    throw Error(Errc::kInvalidArgument, "sampler steps must be in [1, " + std::to_string(total_steps) + "]");
  }
  std::vector<int> out;
  for (int i = 0; i < sampler_steps; ++i) {
    const int n = static_cast<int>(std::lround(static_cast<double>(sampler_steps - i) * total_steps / sampler_steps));
    if (out.empty() || n < out.back()) out.push_back(std::max(n, 1));
  }
  return out;
}

}  // namespace mtid::diffusion
