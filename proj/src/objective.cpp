#include "mtid/objective.hpp"

#include <algorithm>
#include <cmath>

#include "mtid/error.hpp"
#include "mtid/nn/ops.hpp"

namespace mtid::objective {

Tensor masked_init(const ScopeRow& in_scope, int horizon, Rng& rng) {
  if (std::none_of(in_scope.begin(), in_scope.end(), [](bool b) { return b; })) {
    throw Error(Errc::kEmptyScope, "task has no actions in scope");
  }
  const int A = static_cast<int>(in_scope.size());
  Tensor out(horizon, A);
  for (int t = 0; t < horizon; ++t)
    for (int d = 0; d < A; ++d)
      if (in_scope[d]) out(t, d) = rng.normal();
  return out;
}

LossWeights gradient_weights(int horizon, double w0) {
  if (horizon <= 2) throw Error(Errc::kDegenerateHorizon, "gradient weights need T >= 3");
  if (!(w0 > 0)) throw Error(Errc::kInvalidArgument, "w0 must be positive");
  LossWeights out;
  out.w0 = w0;
  const double denom = (horizon + 1) / 2 - 1;  // ceil(T/2) - 1
  for (int t = 1; t <= horizon; ++t) {
    const double k = std::min(t, horizon - t + 1) - 1;
    out.w.push_back(w0 + (1.0 - w0) * k / denom);
  }
  return out;
}

LossWeights both_sides_weights(int horizon, double w0) {
  if (horizon < 1) throw Error(Errc::kDegenerateHorizon, "empty horizon");
  LossWeights out;
  out.w0 = w0;
  out.w.assign(horizon, 1.0);
  out.w.front() = w0;
  out.w.back() = w0;
  return out;
}

LossWeights uniform_weights(int horizon) {
  if (horizon < 1) throw Error(Errc::kDegenerateHorizon, "empty horizon");
  return {std::vector<double>(horizon, 1.0), 1.0};
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "both-sides") return LossKind::kBothSides;
  if (s == "gradient") return LossKind::kGradient;
  throw Error(Errc::kInvalidArgument, "unknown loss '" + s + "'");
}

MaskConvention parse_mask_convention(const std::string& s) {
  if (s == "off") return MaskConvention::kOff;
  if (s == "relevant-penalty") return MaskConvention::kPenalizeIrrelevant;
  if (s == "literal") return MaskConvention::kLiteral;
  throw Error(Errc::kInvalidArgument, "unknown mask loss '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kMse: return "mse";
    case LossKind::kBothSides: return "both-sides";
    case LossKind::kGradient: return "gradient";
  }
  return "?";
}

std::string to_string(MaskConvention m) {
  switch (m) {
    case MaskConvention::kOff: return "off";
    case MaskConvention::kPenalizeIrrelevant: return "relevant-penalty";
    case MaskConvention::kLiteral: return "literal";
  }
  return "?";
}

LossWeights loss_weights(LossKind kind, int horizon, double w0) {
  switch (kind) {
    case LossKind::kMse: return uniform_weights(horizon);
    case LossKind::kBothSides: return both_sides_weights(horizon, w0);
    case LossKind::kGradient: return gradient_weights(horizon, w0);
  }
  throw Error(Errc::kInvalidArgument, "loss kind");
}

Tensor task_mask(const ScopeRow& in_scope, int horizon, double rho, MaskConvention convention) {
  if (!(rho > 0)) throw Error(Errc::kInvalidArgument, "rho must be positive");
  const int A = static_cast<int>(in_scope.size());
  Tensor m(horizon, A, 1.0);
  if (convention == MaskConvention::kOff) return m;
  const bool on_active = convention == MaskConvention::kLiteral;
  for (int t = 0; t < horizon; ++t)
    for (int d = 0; d < A; ++d)
      if (in_scope[d] == on_active) m(t, d) = rho;
  return m;
}

double proximity_loss(const Tensor& predicted, const Tensor& target, const LossWeights& w, const Tensor& mask) {
  if (!predicted.same_shape(target) || !predicted.same_shape(mask) ||
      static_cast<int>(w.w.size()) != predicted.rows()) {
    throw Error(Errc::kShapeMismatch, "proximity loss operands " + predicted.shape_str() + ", " +
                                          target.shape_str() + ", " + mask.shape_str());
  }
  double acc = 0;
  for (int t = 0; t < predicted.rows(); ++t)
    for (int d = 0; d < predicted.cols(); ++d) {
      const double r = predicted(t, d) - target(t, d);
      acc += w.w[t] * mask(t, d) * r * r;
    }
  return acc;
}

Tensor loss_weight_matrix(const LossWeights& w, const std::vector<Tensor>& masks) {
  if (masks.empty()) throw Error(Errc::kEmptyInput, "no masks");
  const int T = static_cast<int>(w.w.size());
  const int A = masks.front().cols();
  Tensor out(static_cast<int>(masks.size()) * T, A);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b].rows() != T || masks[b].cols() != A) throw Error(Errc::kShapeMismatch, "mask shape");
    for (int t = 0; t < T; ++t)
      for (int d = 0; d < A; ++d) out(static_cast<int>(b) * T + t, d) = w.w[t] * masks[b](t, d);
  }
  return out;
}

nn::Var proximity_loss(const nn::Var& predicted, const Tensor& target, const Tensor& weights) {
  return nn::weighted_sq_error(predicted, target, weights);
}

}  // namespace mtid::objective
