#pragma once

#include <vector>

#include "mtid/nn/tensor.hpp"
#include "mtid/rng.hpp"

namespace mtid::diffusion {

using nn::Tensor;

/// Per-step quantities for n = 1..N, stored at index n-1. alpha_bar(0) is 1.
struct NoiseSchedule {
  int steps = 0;
  double offset = 0.008;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> cumulative;  // alpha_bar_n

  double alpha_bar(int n) const;
  bool operator==(const NoiseSchedule&) const = default;
};

inline constexpr double kBetaMax = 0.999;

/// Cosine schedule: alpha_bar follows cos^2(((n/N + s)/(1 + s)) * pi/2)
/// normalized at n = 0, with beta clipped at kBetaMax.
NoiseSchedule cosine_schedule(int steps, double offset = 0.008);

/// Unnormalized cosine curve; exposed for tests.
double cosine_curve(double n, int steps, double offset);

Tensor forward_diffuse(const Tensor& x0, int n, const Tensor& eps, const NoiseSchedule& sched);

/// Deterministic DDIM update from step n to step m < n.
Tensor ddim_jump(const Tensor& xn, int n, int m, const Tensor& predicted_noise, const NoiseSchedule& sched);
Tensor ddim_step(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched);

/// Posterior mean and variance of the ancestral step n -> n-1.
Tensor ddpm_mean(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched);
double ddpm_variance(int n, const NoiseSchedule& sched);
Tensor ddpm_step(const Tensor& xn, int n, const Tensor& predicted_noise, const NoiseSchedule& sched, Rng& rng);

Tensor implied_noise(const Tensor& xn, const Tensor& x0_prediction, int n, const NoiseSchedule& sched);

/// Descending visit order for an S-step sampler over an N-step schedule,
/// starting at N. The final element is followed by a jump to 0.
std::vector<int> sampling_steps(int total_steps, int sampler_steps);

}  // namespace mtid::diffusion
