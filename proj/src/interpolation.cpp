#include "mtid/interpolation.hpp"

#include <cmath>

#include "mtid/error.hpp"

namespace mtid::interpolation {

Strategy parse_strategy(const std::string& s) {
  if (s == "learned") return Strategy::kLearned;
  if (s == "copy_gs") return Strategy::kCopyGoal;
  if (s == "copy_lt") return Strategy::kCopySplit;
  if (s == "fixed_linear") return Strategy::kFixedLinear;
  if (s == "second_interpolation") return Strategy::kSecondPass;
  throw Error(Errc::kInvalidArgument, "unknown interpolation strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kLearned: return "learned";
    case Strategy::kCopyGoal: return "copy_gs";
    case Strategy::kCopySplit: return "copy_lt";
    case Strategy::kFixedLinear: return "fixed_linear";
    case Strategy::kSecondPass: return "second_interpolation";
  }
  return "?";
}

TauInit parse_tau_init(const std::string& s) {
  if (s == "constant") return TauInit::kConstant;
  if (s == "linear_increasing") return TauInit::kLinearIncreasing;
  if (s == "linear_decreasing") return TauInit::kLinearDecreasing;
  if (s == "square") return TauInit::kSquare;
  if (s == "up_then_down") return TauInit::kUpThenDown;
  throw Error(Errc::kInvalidArgument, "unknown tau initializer '" + s + "'");
}

std::string to_string(TauInit t) {
  switch (t) {
    case TauInit::kConstant: return "constant";
    case TauInit::kLinearIncreasing: return "linear_increasing";
    case TauInit::kLinearDecreasing: return "linear_decreasing";
    case TauInit::kSquare: return "square";
    case TauInit::kUpThenDown: return "up_then_down";
  }
  return "?";
}

int interpolation_count(const UNetConfig& unet) {
  unet.validate();
  return 2 * unet.levels * unet.blocks_per_level + unet.middle_blocks;
}

nlohmann::json to_json(const InterpolationConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"count", c.count},
          {"refiner_layers", c.refiner_layers},
          {"refiner_heads", c.refiner_heads},
          {"ff_multiplier", c.ff_multiplier},
          {"encoder_channels", c.encoder_channels},
          {"encoder_kernel", c.encoder_kernel},
          {"use_encoder", c.use_encoder},
          {"use_refiner", c.use_refiner},
          {"strategy", to_string(c.strategy)},
          {"second_pass_index", c.second_pass_index},
          {"tau_init", to_string(c.tau_init)},
          {"tau_value", c.tau_value},
          {"tau_low", c.tau_low},
          {"tau_high", c.tau_high},
          {"w_init_scale", c.w_init_scale}};
}

InterpolationConfig interpolation_config_from_json(const nlohmann::json& j) {
  InterpolationConfig c;
  try {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.count = j.value("count", c.count);
    c.refiner_layers = j.value("refiner_layers", c.refiner_layers);
    c.refiner_heads = j.value("refiner_heads", c.refiner_heads);
    c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
    c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
    c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
    c.use_encoder = j.value("use_encoder", c.use_encoder);
    c.use_refiner = j.value("use_refiner", c.use_refiner);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.second_pass_index = j.value("second_pass_index", c.second_pass_index);
    if (j.contains("tau_init")) c.tau_init = parse_tau_init(j.at("tau_init").get<std::string>());
    c.tau_value = j.value("tau_value", c.tau_value);
    c.tau_low = j.value("tau_low", c.tau_low);
    c.tau_high = j.value("tau_high", c.tau_high);
    c.w_init_scale = j.value("w_init_scale", c.w_init_scale);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("interpolation config: ") + e.what());
  }
  return c;
}

Tensor initial_tau(TauInit init, int count, int width, double value, double low, double high) {
  Tensor tau(count, width);
  for (int c = 0; c < width; ++c) {
    const double u = width > 1 ? static_cast<double>(c) / (width - 1) : 0.0;
    double v = value;
    switch (init) {
      case TauInit::kConstant: v = value; break;
      case TauInit::kLinearIncreasing: v = low + (high - low) * u; break;
      case TauInit::kLinearDecreasing: v = high - (high - low) * u; break;
      case TauInit::kSquare: v = low + (high - low) * u * u; break;
      case TauInit::kUpThenDown: v = low + (high - low) * (1.0 - std::abs(2.0 * u - 1.0)); break;
    }
    for (int r = 0; r < count; ++r) tau(r, c) = v;
  }
  return tau;
}

ObservationEncoder::ObservationEncoder(nn::ParamStore& store, const std::string& name, int obs, int latent,
                                       int channels, int kernel, Rng& rng)
    : conv1(store, name + ".conv1", 1, channels, kernel, (kernel - 1) / 2, kernel / 2, rng),
      conv2(store, name + ".conv2", channels, 1, kernel, (kernel - 1) / 2, kernel / 2, rng),
      has_projection(latent != obs),
      obs_dim(obs) {
  if (has_projection) project = nn::Linear(store, name + ".project", obs, latent, rng);
}

Var ObservationEncoder::operator()(const Var& obs) const {
  if (obs.cols() != obs_dim) {
    throw Error(Errc::kShapeMismatch, "observation width " + std::to_string(obs.cols()) + ", expected " +
                                          std::to_string(obs_dim));
  }
  const int batch = obs.rows();
  Var seq = nn::reshape(obs, batch * obs_dim, 1);
  Var h = conv2(nn::relu(conv1(seq, obs_dim)), obs_dim);
  Var out = nn::reshape(h, batch, obs_dim);
  return has_projection ? project(out) : out;
}

TemporalRefiner::TemporalRefiner(nn::ParamStore& store, const std::string& name, int n_layers, int width,
                                 int heads, int ff_width, Rng& rng) {
  for (int l = 0; l < n_layers; ++l) {
    layers.emplace_back(store, name + ".layer" + std::to_string(l), width, heads, ff_width, 0.0, rng);
  }
}

Var TemporalRefiner::operator()(const Var& x, int count) const {
  Var h = x;
  for (const auto& layer : layers) h = layer(h, count, nullptr);
  return h;
}

InterpolationModule::InterpolationModule(nn::ParamStore& store, const InterpolationConfig& config, int obs_dim,
                                         Rng& rng)
    : config_(config), latent_dim_(config.latent_dim > 0 ? config.latent_dim : obs_dim) {
  if (config_.count < 1) throw Error(Errc::kInvalidArgument, "interpolation count must be >= 1");
  if (!config_.use_encoder && latent_dim_ != obs_dim) {
    throw Error(Errc::kInvalidArgument, "without an encoder the latent width must equal the observation width");
  }
  if (config_.strategy == Strategy::kSecondPass &&
      (config_.second_pass_index < 1 || 2 * config_.second_pass_index > config_.count + 1)) {
    throw Error(Errc::kInvalidArgument, "second interpolation index must be in [1, ceil(M/2)]");
  }
  if (config_.use_encoder) {
    encoder_ = ObservationEncoder(store, "interp.encoder", obs_dim, latent_dim_, config_.encoder_channels,
                                  config_.encoder_kernel, rng);
  }
  if (config_.strategy == Strategy::kLearned || config_.strategy == Strategy::kSecondPass) {
    Tensor w(config_.count, latent_dim_);
    for (auto& v : w.vec()) v = config_.w_init_scale * rng.normal();
    w_ = store.add("interp.W", std::move(w));
    k_ = store.add("interp.k", Tensor(config_.count, latent_dim_));
    tau_ = store.add("interp.tau", initial_tau(config_.tau_init, config_.count, latent_dim_, config_.tau_value,
                                               config_.tau_low, config_.tau_high));
  }
  if (config_.use_refiner && config_.refiner_layers > 0) {
    if (config_.refiner_heads < 1 || latent_dim_ % config_.refiner_heads != 0) {
      throw Error(Errc::kInvalidArgument, "refiner heads must divide the latent width");
    }
    refiner_ = TemporalRefiner(store, "interp.refiner", config_.refiner_layers, latent_dim_, config_.refiner_heads,
                               config_.ff_multiplier * latent_dim_, rng);
  }
}

std::pair<Var, Var> InterpolationModule::encode(const Var& start, const Var& goal) const {
  if (!start.value().same_shape(goal.value())) throw Error(Errc::kShapeMismatch, "V_s and V_g differ in shape");
  if (!config_.use_encoder) {
    if (start.cols() != latent_dim_) throw Error(Errc::kShapeMismatch, "observation width");
    return {start, goal};
  }
  return {encoder_(start), encoder_(goal)};
}

Var InterpolationModule::phi() const {
  const int M = config_.count, W = latent_dim_;
  switch (config_.strategy) {
    case Strategy::kLearned:
    case Strategy::kSecondPass:
      return nn::sigmoid(nn::add(nn::mul(w_, tau_), k_));
    case Strategy::kCopyGoal:
      return nn::constant(Tensor(M, W, 1.0));
    case Strategy::kCopySplit: {
      Tensor p(M, W);
      for (int j = 1; j <= M; ++j)
        for (int c = 0; c < W; ++c) p(j - 1, c) = 2 * j <= M ? 0.0 : 1.0;
      return nn::constant(std::move(p));
    }
    case Strategy::kFixedLinear: {
      Tensor p(M, W);
      for (int j = 1; j <= M; ++j)
        for (int c = 0; c < W; ++c) p(j - 1, c) = static_cast<double>(j) / (M + 1);
      return nn::constant(std::move(p));
    }
  }
  throw Error(Errc::kInvalidArgument, "strategy");
}

Var InterpolationModule::interpolate(const Var& ls, const Var& lg) const {
  if (ls.cols() != latent_dim_ || !ls.value().same_shape(lg.value())) {
    throw Error(Errc::kShapeMismatch, "latent widths do not match the interpolator");
  }
  return nn::blend(ls, lg, phi());
}

Var InterpolationModule::refine(const Var& raw) const {
  if (raw.cols() != latent_dim_ || raw.rows() % config_.count != 0) {
    throw Error(Errc::kShapeMismatch, "refiner input " + raw.value().shape_str());
  }
  if (refiner_.layers.empty()) return raw;
  return refiner_(raw, config_.count);
}

Var InterpolationModule::operator()(const Var& start, const Var& goal) const {
  auto [ls, lg] = encode(start, goal);
  Var f = refine(interpolate(ls, lg));
  if (config_.strategy == Strategy::kSecondPass) {
    const int i = config_.second_pass_index;
    Var a = nn::take_strided_rows(f, config_.count, i - 1);
    Var b = nn::take_strided_rows(f, config_.count, config_.count - i);
    f = refine(interpolate(a, b));
  }
  return f;
}

}  // namespace mtid::interpolation
