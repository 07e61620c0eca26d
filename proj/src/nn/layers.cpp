#include "mtid/nn/layers.hpp"

#include <cmath>

#include "mtid/error.hpp"

namespace mtid::nn {

Var& ParamStore::add(const std::string& name, Tensor init) {
  if (find(name)) throw Error(Errc::kInvalidArgument, "duplicate parameter " + name);
  params_.emplace_back(name, Var(std::move(init), true));
  return params_.back().second;
}

Var* ParamStore::find(const std::string& name) {
  for (auto& [n, v] : params_) {
    if (n == name) return &v;
  }
  return nullptr;
}

const Var* ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return &v;
  }
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& [name, v] : params_) {
    const Var* src = other.find(name);
    if (!src || !src->value().same_shape(v.value())) {
      throw Error(Errc::kShapeMismatch, "parameter layout differs at " + name);
    }
    v.mutable_value() = src->value();
  }
}

Tensor uniform_init(int rows, int cols, int fan_in, Rng& rng) {
  Tensor t(rows, cols);
  const Scalar bound = 1 / std::sqrt(static_cast<Scalar>(fan_in));
  for (auto& v : t.vec()) v = (2 * rng.uniform() - 1) * bound;
  return t;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  weight = store.add(name + ".weight", uniform_init(in, out, in, rng));
  bias = store.add(name + ".bias", uniform_init(1, out, in, rng));
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, int in, int out, int kernel_size,
               int pad_l, int pad_r, Rng& rng)
    : kernel(kernel_size), pad_left(pad_l), pad_right(pad_r) {
  weight = store.add(name + ".weight", uniform_init(kernel * in, out, kernel * in, rng));
  bias = store.add(name + ".bias", uniform_init(1, out, kernel * in, rng));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int width) {
  gamma = store.add(name + ".gamma", Tensor(1, width, 1));
  beta = store.add(name + ".beta", Tensor(1, width, 0));
}

GroupNorm::GroupNorm(ParamStore& store, const std::string& name, int channels, int num_groups)
    : groups(num_groups) {
  gamma = store.add(name + ".gamma", Tensor(1, channels, 1));
  beta = store.add(name + ".beta", Tensor(1, channels, 0));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int width,
                                       int num_heads, Rng& rng)
    : q(store, name + ".q", width, width, rng),
      k(store, name + ".k", width, width, rng),
      v(store, name + ".v", width, width, rng),
      o(store, name + ".o", width, width, rng),
      heads(num_heads) {}

Var MultiHeadAttention::operator()(const Var& xq, const Var& xkv, int q_len, int kv_len) const {
  const Scalar head_width = static_cast<Scalar>(xq.cols() / heads);
  Var a = attention(q(xq), k(xkv), v(xkv), q_len, kv_len, heads, 1 / std::sqrt(head_width));
  return o(a);
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamStore& store, const std::string& name,
                                                 int width, int heads, int ff_width, Scalar p,
                                                 Rng& rng)
    : attn(store, name + ".attn", width, heads, rng),
      norm1(store, name + ".norm1", width),
      norm2(store, name + ".norm2", width),
      ff1(store, name + ".ff1", width, ff_width, rng),
      ff2(store, name + ".ff2", ff_width, width, rng),
      dropout_p(p) {}

Var TransformerEncoderLayer::operator()(const Var& x, int length, Rng* train_rng) const {
  const Scalar p = train_rng ? dropout_p : 0;
  Var a = attn(x, x, length, length);
  if (p > 0) a = dropout(a, p, *train_rng);
  Var h = norm1(add(x, a));
  Var f = ff2(relu(ff1(h)));
  if (p > 0) f = dropout(f, p, *train_rng);
  return norm2(add(h, f));
}

Adam::Adam(ParamStore& store, AdamConfig config) : store_(&store), config_(config) {
  for (const auto& [_, v] : store) {
    m_.push_back(Tensor::like(v.value()));
    v_.push_back(Tensor::like(v.value()));
  }
}

void Adam::step(Scalar lr) {
  ++t_;
  const Scalar bc1 = 1 - std::pow(config_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1 - std::pow(config_.beta2, static_cast<Scalar>(t_));
  std::size_t i = 0;
  for (auto& [_, p] : *store_) {
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    ++i;
    if (!p.node()->has_grad()) continue;
    const Tensor& g = p.grad();
    Tensor& w = p.mutable_value();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const Scalar gj = g[j] + config_.weight_decay * w[j];
      m[j] = config_.beta1 * m[j] + (1 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1 - config_.beta2) * gj * gj;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
    }
  }
}

Tensor sinusoidal_embedding(const std::vector<int>& steps, int width) {
  if (width < 2 || width % 2 != 0) throw Error(Errc::kInvalidArgument, "sinusoidal width must be even");
  const int half = width / 2;
  Tensor out(static_cast<int>(steps.size()), width);
  const Scalar log_base = std::log(Scalar{10000}) / std::max(half - 1, 1);
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const Scalar arg = steps[r] * std::exp(-log_base * i);
      out(static_cast<int>(r), i) = std::sin(arg);
      out(static_cast<int>(r), half + i) = std::cos(arg);
    }
  }
  return out;
}

}  // namespace mtid::nn
