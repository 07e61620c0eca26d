#include "mtid/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "mtid/error.hpp"

namespace mtid::denoiser {

namespace {

void check_condition(int task, const std::vector<Scalar>& start, const std::vector<Scalar>& goal, const Dims& d) {
  if (task < 0 || task >= d.num_tasks) throw Error(Errc::kOutOfRange, "task " + std::to_string(task));
  if (static_cast<int>(start.size()) != d.obs_dim || static_cast<int>(goal.size()) != d.obs_dim) {
    throw Error(Errc::kShapeMismatch, "observation width differs from O=" + std::to_string(d.obs_dim));
  }
}

int group_count(int channels, int max_groups) {
  int g = std::min(max_groups, channels);
  while (channels % g != 0) --g;
  return g;
}

}  // namespace

Tensor build_state_matrix(int task, const std::vector<Scalar>& start, const std::vector<Scalar>& goal,
                          const Tensor& actions, const Dims& dims) {
  if (actions.rows() != dims.horizon || actions.cols() != dims.num_actions) {
    throw Error(Errc::kShapeMismatch, "action block " + actions.shape_str());
  }
  Tensor x(dims.horizon, dims.width());
  for (int t = 0; t < dims.horizon; ++t)
    for (int a = 0; a < dims.num_actions; ++a) x(t, dims.action_begin() + a) = actions(t, a);
  condition_project(x, 0, task, start, goal, dims);
  return x;
}

void condition_project(Tensor& x, int row_offset, int task, const std::vector<Scalar>& start,
                       const std::vector<Scalar>& goal, const Dims& dims) {
  check_condition(task, start, goal, dims);
  if (x.cols() != dims.width() || row_offset + dims.horizon > x.rows()) {
    throw Error(Errc::kShapeMismatch, "state matrix " + x.shape_str());
  }
  for (int t = 0; t < dims.horizon; ++t) {
    const int r = row_offset + t;
    for (int c = 0; c < dims.num_tasks; ++c) x(r, c) = c == task ? 1.0 : 0.0;
    for (int o = 0; o < dims.obs_dim; ++o) {
      double v = 0;
      if (t == 0) v = start[o];
      if (t == dims.horizon - 1) v = goal[o];
      x(r, dims.obs_begin() + o) = v;
    }
  }
}

Tensor condition_project(const Tensor& x, int task, const std::vector<Scalar>& start,
                         const std::vector<Scalar>& goal, const Dims& dims) {
  Tensor out = x;
  condition_project(out, 0, task, start, goal, dims);
  return out;
}

Tensor action_block(const Tensor& x, int row_offset, const Dims& dims) {
  Tensor out(dims.horizon, dims.num_actions);
  for (int t = 0; t < dims.horizon; ++t)
    for (int a = 0; a < dims.num_actions; ++a) out(t, a) = x(row_offset + t, dims.action_begin() + a);
  return out;
}

CrossAttention::CrossAttention(nn::ParamStore& store, const std::string& name, int latent_dim, int channels,
                               Rng& rng)
    : project(store, name + ".kv", latent_dim, channels, rng), scale_dim(latent_dim) {}

Var CrossAttention::operator()(const Var& query, const Var& latent, int q_len, int kv_len) const {
  Var kv = project(latent);
  return nn::attention(query, kv, kv, q_len, kv_len, 1, 1.0 / std::sqrt(static_cast<Scalar>(scale_dim)));
}

ResidualTemporalBlock::ResidualTemporalBlock(nn::ParamStore& store, const std::string& name, int in, int out,
                                             int time_dim, int latent_dim, int max_groups, bool attention,
                                             Rng& rng)
    : conv1(store, name + ".conv1", in, out, 3, 1, 1, rng),
      conv2(store, name + ".conv2", out, out, 3, 1, 1, rng),
      norm1(store, name + ".norm1", out, group_count(out, max_groups)),
      norm2(store, name + ".norm2", out, group_count(out, max_groups)),
      time_proj(store, name + ".time", time_dim, out, rng),
      has_residual_proj(in != out),
      has_attention(attention) {
  if (has_residual_proj) residual = nn::Conv1d(store, name + ".residual", in, out, 1, 0, 0, rng);
  if (has_attention) attn = CrossAttention(store, name + ".cross", latent_dim, out, rng);
}

Var ResidualTemporalBlock::operator()(const Var& x, int length, const Var& temb, const Var& latent,
                                      int kv_len) const {
  Var h = nn::mish(norm1(conv1(x, length), length));
  h = nn::add(h, nn::repeat_rows(time_proj(nn::mish(temb)), length));
  if (has_attention) h = nn::add(h, attn(h, latent, length, kv_len));
  h = nn::mish(norm2(conv2(h, length), length));
  return nn::add(h, has_residual_proj ? residual(x, length) : x);
}

UNet::UNet(nn::ParamStore& store, const UNetConfig& config, int transition_dim, int latent_dim, Rng& rng)
    : config_(config), transition_dim_(transition_dim), latent_dim_(latent_dim) {
  config_.validate();
  const int L = config_.levels;
  const int B = config_.blocks_per_level;
  const bool attn = config_.routing != FeatureRouting::kNone;
  const int G = config_.max_groups;
  time_dim_ = config_.base_width;
  time1 = nn::Linear(store, "unet.time1", time_dim_, 4 * time_dim_, rng);
  time2 = nn::Linear(store, "unet.time2", 4 * time_dim_, time_dim_, rng);

  int ch = transition_dim;
  for (int l = 0; l < L; ++l) {
    const int w = config_.width(l);
    for (int b = 0; b < B; ++b) {
      down_.emplace_back(store, "unet.down" + std::to_string(l) + "." + std::to_string(b), ch, w, time_dim_,
                         latent_dim, G, attn, rng);
      ch = w;
    }
    if (l + 1 < L) downsample_.emplace_back(store, "unet.downsample" + std::to_string(l), ch, ch, 2, 0, 1, rng);
  }
  for (int b = 0; b < config_.middle_blocks; ++b) {
    middle_.emplace_back(store, "unet.mid." + std::to_string(b), ch, ch, time_dim_, latent_dim, G, attn, rng);
  }
  for (int l = L - 1; l >= 0; --l) {
    const int w = config_.width(l);
    for (int b = 0; b < B; ++b) {
      // The first block of each level takes the skip connection.
      const int in = b == 0 ? ch + w : ch;
      up_.emplace_back(store, "unet.up" + std::to_string(l) + "." + std::to_string(b), in, w, time_dim_,
                       latent_dim, G, attn, rng);
      ch = w;
    }
    if (l > 0) upsample_.emplace_back(store, "unet.upsample" + std::to_string(l), ch, ch, 2, 1, 0, rng);
  }
  final_conv_ = nn::Conv1d(store, "unet.final_conv", ch, ch, 3, 1, 1, rng);
  final_norm_ = nn::GroupNorm(store, "unet.final_norm", ch, group_count(ch, G));
  final_proj_ = nn::Conv1d(store, "unet.final_proj", ch, transition_dim, 1, 0, 0, rng);
  blocks_count_ = down_.size() + middle_.size() + up_.size();
}

Var UNet::latent_for(const Var& features, int block, int batch, int& kv_len) const {
  const int M = static_cast<int>(blocks_count_);
  switch (config_.routing) {
    case FeatureRouting::kPerBlock:
      kv_len = 1;
      return nn::take_strided_rows(features, M, block);
    case FeatureRouting::kAll:
      kv_len = M;
      return features;
    case FeatureRouting::kNone:
      kv_len = 0;
      return {};
  }
  (void)batch;
  return {};
}

Var UNet::operator()(const Var& x, int length, const std::vector<int>& steps, const Var& features) const {
  const int batch = static_cast<int>(steps.size());
  if (x.cols() != transition_dim_ || x.rows() != batch * length) {
    throw Error(Errc::kShapeMismatch, "unet input " + x.value().shape_str());
  }
  const int M = static_cast<int>(blocks_count_);
  if (config_.routing != FeatureRouting::kNone &&
      (!features.defined() || features.rows() != batch * M || features.cols() != latent_dim_)) {
    throw Error(Errc::kShapeMismatch, "expected " + std::to_string(M) + " latent features of width " +
                                          std::to_string(latent_dim_) + " per item");
  }
  Var temb = time2(nn::mish(time1(nn::constant(nn::sinusoidal_embedding(steps, time_dim_)))));

  int block = 0;
  auto run = [&](const ResidualTemporalBlock& b, const Var& h) {
    int kv_len = 0;
    Var lat = latent_for(features, block++, batch, kv_len);
    return b(h, length, temb, lat, kv_len);
  };

  const int L = config_.levels;
  const int B = config_.blocks_per_level;
  Var h = x;
  std::vector<Var> skips;
  for (int l = 0; l < L; ++l) {
    for (int b = 0; b < B; ++b) h = run(down_[l * B + b], h);
    skips.push_back(h);
    if (l + 1 < L) h = downsample_[l](h, length);
  }
  for (const auto& m : middle_) h = run(m, h);
  for (int i = 0; i < L; ++i) {
    const int l = L - 1 - i;
    for (int b = 0; b < B; ++b) {
      if (b == 0) h = nn::concat_cols(h, skips[l]);
      h = run(up_[i * B + b], h);
    }
    if (B == 0) h = nn::add(h, skips[l]);
    if (l > 0) h = upsample_[i](h, length);
  }
  h = nn::mish(final_norm_(final_conv_(h, length), length));
  return final_proj_(h, length);
}

}  // namespace mtid::denoiser
