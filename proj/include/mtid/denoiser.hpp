#pragma once

#include <string>
#include <vector>

#include "mtid/nn/layers.hpp"
#include "mtid/unet_config.hpp"

namespace mtid::denoiser {

using nn::Tensor;
using nn::Var;

/// Column layout of one row of the iteration matrix: task one-hot, action
/// block, observation block.
struct Dims {
  int num_tasks = 0;    // C
  int num_actions = 0;  // A
  int obs_dim = 0;      // O
  int horizon = 0;      // T

  int width() const { return num_tasks + num_actions + obs_dim; }
  int action_begin() const { return num_tasks; }
  int obs_begin() const { return num_tasks + num_actions; }
};

/// T x (C+A+O): task one-hot on every row, V_s in the first row and V_g in
/// the last row of the observation block, zeros between.
Tensor build_state_matrix(int task, const std::vector<Scalar>& start, const std::vector<Scalar>& goal,
                          const Tensor& action_block, const Dims& dims);

/// Overwrites the task and observation blocks of a T-row matrix in place.
void condition_project(Tensor& x, int row_offset, int task, const std::vector<Scalar>& start,
                       const std::vector<Scalar>& goal, const Dims& dims);
Tensor condition_project(const Tensor& x, int task, const std::vector<Scalar>& start,
                         const std::vector<Scalar>& goal, const Dims& dims);

Tensor action_block(const Tensor& x, int row_offset, const Dims& dims);

/// Fuses a hidden sequence with latent tokens: query = hidden [batch * T, ch],
/// key = value = projected latent tokens. Scores are scaled by 1/sqrt(scale_dim).
struct CrossAttention {
  nn::Linear project;  // O_lat -> ch
  int scale_dim = 1;

  CrossAttention() = default;
  CrossAttention(nn::ParamStore& store, const std::string& name, int latent_dim, int channels, Rng& rng);
  Var operator()(const Var& query, const Var& latent, int q_len, int kv_len) const;
};

struct ResidualTemporalBlock {
  nn::Conv1d conv1, conv2;
  nn::GroupNorm norm1, norm2;
  nn::Linear time_proj;
  nn::Conv1d residual;  // 1x1, only when widths differ
  bool has_residual_proj = false;
  bool has_attention = false;
  CrossAttention attn;

  ResidualTemporalBlock() = default;
  ResidualTemporalBlock(nn::ParamStore& store, const std::string& name, int in, int out, int time_dim,
                        int latent_dim, int max_groups, bool attention, Rng& rng);
  /// x [batch * T, in]; temb [batch, time_dim]; latent [batch * kv_len, O_lat]
  Var operator()(const Var& x, int length, const Var& temb, const Var& latent, int kv_len) const;
};

class UNet {
 public:
  UNet() = default;
  UNet(nn::ParamStore& store, const UNetConfig& config, int transition_dim, int latent_dim, Rng& rng);

  const UNetConfig& config() const { return config_; }
  int feature_count() const { return static_cast<int>(blocks_count_); }

  /// x [batch * T, C+A+O], steps one per item, features [batch * M, O_lat].
  /// Returns the predicted clean matrix, same shape as x.
  Var operator()(const Var& x, int length, const std::vector<int>& steps, const Var& features) const;

 private:
  Var latent_for(const Var& features, int block, int batch, int& kv_len) const;

  UNetConfig config_;
  int transition_dim_ = 0;
  int latent_dim_ = 0;
  std::size_t blocks_count_ = 0;
  int time_dim_ = 0;
  nn::Linear time1, time2;
  std::vector<ResidualTemporalBlock> down_, middle_, up_;
  std::vector<nn::Conv1d> downsample_, upsample_;
  nn::Conv1d final_conv_, final_proj_;
  nn::GroupNorm final_norm_;
};

}  // namespace mtid::denoiser
