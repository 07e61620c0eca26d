#pragma once

#include <string>
#include <vector>

#include "mtid/nn/autograd.hpp"
#include "mtid/rng.hpp"

namespace mtid::objective {

using nn::Tensor;

/// Row of the scope table for one task: in_scope[d] is true when action d
/// belongs to the task.
using ScopeRow = std::vector<bool>;

/// T x A block with standard normal entries on in-scope columns, zero elsewhere.
Tensor masked_init(const ScopeRow& in_scope, int horizon, Rng& rng);

struct LossWeights {
  std::vector<double> w;
  double w0 = 10.0;
};

/// Linear ramp from w0 at both ends down to 1 at the center.
LossWeights gradient_weights(int horizon, double w0);
/// w0 at the first and last step, 1 elsewhere.
LossWeights both_sides_weights(int horizon, double w0);
LossWeights uniform_weights(int horizon);

enum class LossKind { kMse, kBothSides, kGradient };
enum class MaskConvention { kOff, kPenalizeIrrelevant, kLiteral };

LossKind parse_loss_kind(const std::string& s);
MaskConvention parse_mask_convention(const std::string& s);
std::string to_string(LossKind k);
std::string to_string(MaskConvention m);

LossWeights loss_weights(LossKind kind, int horizon, double w0);

/// T x A mask: rho on out-of-scope columns (kPenalizeIrrelevant), rho on
/// in-scope columns (kLiteral), or all ones (kOff).
Tensor task_mask(const ScopeRow& in_scope, int horizon, double rho, MaskConvention convention);

/// sum_t sum_d w_t m_td (a_td - target_td)^2
double proximity_loss(const Tensor& predicted, const Tensor& target, const LossWeights& w, const Tensor& mask);

/// Elementwise w_t * m_td for a batch of blocks stacked as [batch * T, A];
/// `masks` holds one T x A mask per batch item.
Tensor loss_weight_matrix(const LossWeights& w, const std::vector<Tensor>& masks);

/// Differentiable form over stacked blocks, weights from loss_weight_matrix.
nn::Var proximity_loss(const nn::Var& predicted, const Tensor& target, const Tensor& weights);

}  // namespace mtid::objective
