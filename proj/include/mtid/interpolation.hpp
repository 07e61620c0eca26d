#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mtid/nn/layers.hpp"
#include "mtid/unet_config.hpp"

namespace mtid::interpolation {

using nn::Tensor;
using nn::Var;

enum class Strategy {
  kLearned,      // phi = sigmoid(W * tau + k)
  kCopyGoal,     // I_j = L_g
  kCopySplit,    // I_j = L_s for j <= M/2, L_g after
  kFixedLinear,  // phi_j = j / (M + 1)
  kSecondPass,   // interpolate again between F_i and F_{M+1-i}
};

enum class TauInit { kConstant, kLinearIncreasing, kLinearDecreasing, kSquare, kUpThenDown };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);
TauInit parse_tau_init(const std::string& s);
std::string to_string(TauInit t);

/// Number of residual temporal blocks, one latent feature per block.
int interpolation_count(const UNetConfig& unet);

struct InterpolationConfig {
  int latent_dim = 0;  // 0: same as the observation width
  int count = 14;      // M
  int refiner_layers = 6;
  int refiner_heads = 4;
  int ff_multiplier = 4;
  int encoder_channels = 8;
  int encoder_kernel = 3;
  bool use_encoder = true;
  bool use_refiner = true;
  Strategy strategy = Strategy::kLearned;
  int second_pass_index = 1;  // i, 1-based
  TauInit tau_init = TauInit::kConstant;
  double tau_value = 1.0;                       // constant initializer
  double tau_low = 0.0, tau_high = 1.0;         // ramp initializers
  double w_init_scale = 0.01;

  bool operator==(const InterpolationConfig&) const = default;
};

nlohmann::json to_json(const InterpolationConfig& c);
InterpolationConfig interpolation_config_from_json(const nlohmann::json& j);

/// M x width tau matrix for the chosen initializer; ramps run along the
/// feature axis.
Tensor initial_tau(TauInit init, int count, int width, double value, double low, double high);

/// Two 1-D convolutions over the feature axis with a ReLU between them.
struct ObservationEncoder {
  nn::Conv1d conv1, conv2;
  nn::Linear project;  // only when latent width differs from the observation width
  bool has_projection = false;
  int obs_dim = 0;

  ObservationEncoder() = default;
  ObservationEncoder(nn::ParamStore& store, const std::string& name, int obs_dim, int latent_dim, int channels,
                     int kernel, Rng& rng);
  /// [batch, O] -> [batch, O_lat]
  Var operator()(const Var& obs) const;
};

struct TemporalRefiner {
  std::vector<nn::TransformerEncoderLayer> layers;

  TemporalRefiner() = default;
  TemporalRefiner(nn::ParamStore& store, const std::string& name, int layers, int width, int heads, int ff_width,
                  Rng& rng);
  /// [batch * M, width] -> same shape; self-attention within each item's M rows.
  Var operator()(const Var& x, int count) const;
};

class InterpolationModule {
 public:
  InterpolationModule() = default;
  InterpolationModule(nn::ParamStore& store, const InterpolationConfig& config, int obs_dim, Rng& rng);

  const InterpolationConfig& config() const { return config_; }
  int latent_dim() const { return latent_dim_; }
  int count() const { return config_.count; }

  /// Returns (L_s, L_g), each [batch, O_lat].
  std::pair<Var, Var> encode(const Var& start, const Var& goal) const;
  /// Gate matrix phi, M x O_lat.
  Var phi() const;
  /// Raw interpolations I, [batch * M, O_lat].
  Var interpolate(const Var& ls, const Var& lg) const;
  Var refine(const Var& raw) const;
  /// Full path V_s, V_g -> F, [batch * M, O_lat].
  Var operator()(const Var& start, const Var& goal) const;

  Var& w() { return w_; }
  Var& k() { return k_; }
  Var& tau() { return tau_; }

 private:
  InterpolationConfig config_;
  int latent_dim_ = 0;
  ObservationEncoder encoder_;
  TemporalRefiner refiner_;
  Var w_, k_, tau_;
};

}  // namespace mtid::interpolation
