#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtid/nn/ops.hpp"
#include "mtid/rng.hpp"

namespace mtid::nn {

/// Named, ordered collection of trainable tensors. Modules register their
/// parameters here at construction; optimizers and checkpoints walk it.
class ParamStore {
 public:
  Var& add(const std::string& name, Tensor init);
  Var* find(const std::string& name);
  const Var* find(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copies values (by name) from another store with identical layout.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Var>> params_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the default for linear and conv layers.
Tensor uniform_init(int rows, int cols, int fan_in, Rng& rng);

struct Linear {
  Var weight;  // [in, out]
  Var bias;    // [1, out]

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
  int in() const { return weight.rows(); }
  int out() const { return weight.cols(); }
};

struct Conv1d {
  Var weight;  // [kernel * in, out]
  Var bias;
  int kernel = 1;
  int pad_left = 0;
  int pad_right = 0;

  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, int in, int out, int kernel, int pad_left,
         int pad_right, Rng& rng);
  Var operator()(const Var& x, int length) const {
    return conv1d(x, length, weight, bias, kernel, pad_left, pad_right);
  }
  int out_length(int length) const { return length + pad_left + pad_right - kernel + 1; }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int width);
  Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
};

struct GroupNorm {
  Var gamma;
  Var beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParamStore& store, const std::string& name, int channels, int groups);
  Var operator()(const Var& x, int length) const { return group_norm(x, length, groups, gamma, beta); }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads, Rng& rng);
  Var operator()(const Var& xq, const Var& xkv, int q_len, int kv_len) const;
};

/// Post-norm encoder layer: x = LN(x + SA(x)); x = LN(x + FF(x)), ReLU FF.
struct TransformerEncoderLayer {
  MultiHeadAttention attn;
  LayerNorm norm1, norm2;
  Linear ff1, ff2;
  Scalar dropout_p = 0;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParamStore& store, const std::string& name, int width, int heads,
                          int ff_width, Scalar dropout_p, Rng& rng);
  /// `train_rng` enables dropout; pass nullptr for deterministic evaluation.
  Var operator()(const Var& x, int length, Rng* train_rng) const;
};

struct AdamConfig {
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(ParamStore& store, AdamConfig config = {});

  void step(Scalar lr);
  long steps() const { return t_; }

  // Moment buffers in store order, for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  ParamStore* store_ = nullptr;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

/// Sinusoidal features of integer steps: [sin(n f_0)..., cos(n f_0)...].
Tensor sinusoidal_embedding(const std::vector<int>& steps, int width);

}  // namespace mtid::nn
