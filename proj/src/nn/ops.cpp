#include "mtid/nn/ops.hpp"

#include <cmath>

#include "mtid/error.hpp"
#include "mtid/kernels.hpp"

namespace mtid::nn {

using kernels::GemmShape;
using kernels::Transpose;

namespace {

Tensor* parent_grad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

void require(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) throw Error(Errc::kShapeMismatch, std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
}

// C (+)= op(A) op(B) on whole tensors.
void gemm(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c, bool acc) {
  const int m = ta == Transpose::kNo ? a.rows() : a.cols();
  const int k = ta == Transpose::kNo ? a.cols() : a.rows();
  const int n = tb == Transpose::kNo ? b.cols() : b.rows();
  kernels::omp::gemm(ta, tb, GemmShape{m, n, k}, a.data(), b.data(), c.data(), acc);
}

Scalar softplus(Scalar x) { return x > 20 ? x : std::log1p(std::exp(x)); }
Scalar sigm(Scalar x) { return 1 / (1 + std::exp(-x)); }

template <typename Fwd, typename Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out = Tensor::like(x.value());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(std::move(out), {x}, [deriv](Node& self) {
    const Tensor& xv = parent_value(self, 0);
    Tensor& gx = *parent_grad(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], self.value[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Tensor out(a.rows(), b.cols());
  gemm(Transpose::kNo, Transpose::kNo, a.value(), b.value(), out, false);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* ga = parent_grad(self, 0)) gemm(Transpose::kNo, Transpose::kYes, self.grad, parent_value(self, 1), *ga, true);
    if (Tensor* gb = parent_grad(self, 1)) gemm(Transpose::kYes, Transpose::kNo, parent_value(self, 0), self.grad, *gb, true);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  require(x.cols() == w.rows(), "linear", x.value(), w.value());
  require(bias.rows() == 1 && bias.cols() == w.cols(), "linear bias", w.value(), bias.value());
  Tensor out(x.rows(), w.cols());
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (int c = 0; c < out.cols(); ++c) row[c] = bias.value()[c];
  }
  gemm(Transpose::kNo, Transpose::kNo, x.value(), w.value(), out, true);
  return make_result(std::move(out), {x, w, bias}, [](Node& self) {
    if (Tensor* gx = parent_grad(self, 0)) gemm(Transpose::kNo, Transpose::kYes, self.grad, parent_value(self, 1), *gx, true);
    if (Tensor* gw = parent_grad(self, 1)) gemm(Transpose::kYes, Transpose::kNo, parent_value(self, 0), self.grad, *gw, true);
    if (Tensor* gb = parent_grad(self, 2)) {
      for (int r = 0; r < self.grad.rows(); ++r) {
        auto g = self.grad.row(r);
        for (int c = 0; c < self.grad.cols(); ++c) (*gb)[c] += g[c];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "add", a.value(), b.value());
  Tensor out = a.value();
  out.add_(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* ga = parent_grad(self, 0)) ga->add_(self.grad);
    if (Tensor* gb = parent_grad(self, 1)) gb->add_(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "sub", a.value(), b.value());
  Tensor out = a.value();
  out.add_(b.value(), -1);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* ga = parent_grad(self, 0)) ga->add_(self.grad);
    if (Tensor* gb = parent_grad(self, 1)) gb->add_(self.grad, -1);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.value().same_shape(b.value()), "mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    if (Tensor* ga = parent_grad(self, 0)) for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    if (Tensor* gb = parent_grad(self, 1)) for (std::size_t i = 0; i < av.size(); ++i) (*gb)[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& a, Scalar s) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& self) { parent_grad(self, 0)->add_(self.grad, s); });
}

Var add_row(const Var& a, const Var& b) {
  require(b.rows() == 1 && b.cols() == a.cols(), "add_row", a.value(), b.value());
  Tensor out = a.value();
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (int c = 0; c < out.cols(); ++c) row[c] += b.value()[c];
  }
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* ga = parent_grad(self, 0)) ga->add_(self.grad);
    if (Tensor* gb = parent_grad(self, 1)) {
      for (int r = 0; r < self.grad.rows(); ++r) {
        auto g = self.grad.row(r);
        for (int c = 0; c < self.grad.cols(); ++c) (*gb)[c] += g[c];
      }
    }
  });
}

Var relu(const Var& x) {
  return unary(x, [](Scalar v) { return v > 0 ? v : Scalar{0}; },
               [](Scalar v, Scalar) { return v > 0 ? Scalar{1} : Scalar{0}; });
}

Var mish(const Var& x) {
  return unary(
      x, [](Scalar v) { return v * std::tanh(softplus(v)); },
      [](Scalar v, Scalar) {
        const Scalar t = std::tanh(softplus(v));
        return t + v * sigm(v) * (1 - t * t);
      });
}

Var sigmoid(const Var& x) {
  return unary(x, [](Scalar v) { return sigm(v); }, [](Scalar, Scalar y) { return y * (1 - y); });
}

Var reshape(const Var& x, int rows, int cols) {
  Tensor out = x.value().reshaped(rows, cols);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& gx = *parent_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols", a.value(), b.value());
  const int ca = a.cols(), cb = b.cols();
  Tensor out(a.rows(), ca + cb);
  for (int r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    auto ra = a.value().row(r);
    auto rb = b.value().row(r);
    std::copy(ra.begin(), ra.end(), dst.begin());
    std::copy(rb.begin(), rb.end(), dst.begin() + ca);
  }
  return make_result(std::move(out), {a, b}, [ca, cb](Node& self) {
    Tensor* ga = parent_grad(self, 0);
    Tensor* gb = parent_grad(self, 1);
    for (int r = 0; r < self.grad.rows(); ++r) {
      auto g = self.grad.row(r);
      if (ga) for (int c = 0; c < ca; ++c) (*ga)(r, c) += g[c];
      if (gb) for (int c = 0; c < cb; ++c) (*gb)(r, c) += g[ca + c];
    }
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  if (begin < 0 || end > x.cols() || begin > end) {
    throw Error(Errc::kOutOfRange, "slice_cols out of range for " + x.value().shape_str());
  }
  Tensor out(x.rows(), end - begin);
  for (int r = 0; r < out.rows(); ++r) {
    auto src = x.value().row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  return make_result(std::move(out), {x}, [begin](Node& self) {
    Tensor& gx = *parent_grad(self, 0);
    for (int r = 0; r < self.grad.rows(); ++r) {
      auto g = self.grad.row(r);
      for (int c = 0; c < self.grad.cols(); ++c) gx(r, begin + c) += g[c];
    }
  });
}

Var take_strided_rows(const Var& x, int stride, int offset) {
  if (stride <= 0 || x.rows() % stride != 0 || offset < 0 || offset >= stride) {
    throw Error(Errc::kOutOfRange, "take_strided_rows: bad stride/offset");
  }
  const int groups = x.rows() / stride;
  Tensor out(groups, x.cols());
  for (int g = 0; g < groups; ++g) {
    auto src = x.value().row(g * stride + offset);
    std::copy(src.begin(), src.end(), out.row(g).begin());
  }
  return make_result(std::move(out), {x}, [stride, offset](Node& self) {
    Tensor& gx = *parent_grad(self, 0);
    for (int g = 0; g < self.grad.rows(); ++g) {
      auto src = self.grad.row(g);
      auto dst = gx.row(g * stride + offset);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var repeat_rows(const Var& v, int length) {
  Tensor out(v.rows() * length, v.cols());
  for (int b = 0; b < v.rows(); ++b) {
    auto src = v.value().row(b);
    for (int t = 0; t < length; ++t) std::copy(src.begin(), src.end(), out.row(b * length + t).begin());
  }
  return make_result(std::move(out), {v}, [length](Node& self) {
    Tensor& gv = *parent_grad(self, 0);
    for (int b = 0; b < gv.rows(); ++b) {
      auto dst = gv.row(b);
      for (int t = 0; t < length; ++t) {
        auto g = self.grad.row(b * length + t);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
      }
    }
  });
}

Var mean_rows(const Var& x, int length) {
  if (length <= 0 || x.rows() % length != 0) throw Error(Errc::kShapeMismatch, "mean_rows: bad length");
  const int batch = x.rows() / length;
  Tensor out(batch, x.cols());
  const Scalar inv = Scalar{1} / length;
  for (int b = 0; b < batch; ++b) {
    auto dst = out.row(b);
    for (int t = 0; t < length; ++t) {
      auto src = x.value().row(b * length + t);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c] * inv;
    }
  }
  return make_result(std::move(out), {x}, [length, inv](Node& self) {
    Tensor& gx = *parent_grad(self, 0);
    for (int b = 0; b < self.grad.rows(); ++b) {
      auto g = self.grad.row(b);
      for (int t = 0; t < length; ++t) {
        auto dst = gx.row(b * length + t);
        for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c] * inv;
      }
    }
  });
}

Var sum(const Var& x) {
  Scalar s = 0;
  for (Scalar v : x.value().vec()) s += v;
  return make_result(Tensor(1, 1, s), {x}, [](Node& self) {
    Tensor& gx = *parent_grad(self, 0);
    const Scalar g = self.grad[0];
    for (auto& v : gx.vec()) v += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), Scalar{1} / static_cast<Scalar>(x.value().size())); }

Var conv1d(const Var& x, int length, const Var& w, const Var& bias, int kernel, int pad_left,
           int pad_right) {
  if (length <= 0 || x.rows() % length != 0) throw Error(Errc::kShapeMismatch, "conv1d: bad length");
  const int channels = x.cols();
  require(w.rows() == kernel * channels, "conv1d weight", x.value(), w.value());
  require(bias.rows() == 1 && bias.cols() == w.cols(), "conv1d bias", w.value(), bias.value());
  const int batch = x.rows() / length;
  const int out_len = length + pad_left + pad_right - kernel + 1;
  if (out_len <= 0) throw Error(Errc::kShapeMismatch, "conv1d: empty output");

  Tensor col(batch * out_len, kernel * channels);
  kernels::omp::im2col(x.value().data(), batch, length, channels, kernel, pad_left, out_len, col.data());
  Tensor out(batch * out_len, w.cols());
  for (int r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (int c = 0; c < out.cols(); ++c) row[c] = bias.value()[c];
  }
  gemm(Transpose::kNo, Transpose::kNo, col, w.value(), out, true);

  return make_result(std::move(out), {x, w, bias},
                     [col = std::move(col), batch, length, channels, kernel, pad_left, out_len](Node& self) {
    if (Tensor* gw = parent_grad(self, 1)) gemm(Transpose::kYes, Transpose::kNo, col, self.grad, *gw, true);
    if (Tensor* gb = parent_grad(self, 2)) {
      for (int r = 0; r < self.grad.rows(); ++r) {
        auto g = self.grad.row(r);
        for (int c = 0; c < self.grad.cols(); ++c) (*gb)[c] += g[c];
      }
    }
    if (Tensor* gx = parent_grad(self, 0)) {
      Tensor gcol(col.rows(), col.cols());
      gemm(Transpose::kNo, Transpose::kYes, self.grad, parent_value(self, 1), gcol, false);
      kernels::omp::col2im_add(gcol.data(), batch, length, channels, kernel, pad_left, out_len, gx->data());
    }
  });
}

namespace {

// Shared normalisation backward for a set of element groups: given the
// normalised values xhat, upstream dxhat and inverse std per group.
struct NormStats {
  Tensor xhat;
  std::vector<Scalar> inv_std;
};

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  const int rows = x.rows(), cols = x.cols();
  require(gamma.cols() == cols && beta.cols() == cols, "layer_norm", x.value(), gamma.value());
  NormStats st{Tensor(rows, cols), std::vector<Scalar>(rows)};
  Tensor out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    auto xr = x.value().row(r);
    Scalar mu = 0;
    for (Scalar v : xr) mu += v;
    mu /= cols;
    Scalar var = 0;
    for (Scalar v : xr) var += (v - mu) * (v - mu);
    var /= cols;
    const Scalar is = 1 / std::sqrt(var + eps);
    st.inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
      const Scalar xh = (xr[c] - mu) * is;
      st.xhat(r, c) = xh;
      out(r, c) = xh * gamma.value()[c] + beta.value()[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [st = std::move(st)](Node& self) {
    const int rows = self.grad.rows(), cols = self.grad.cols();
    const Tensor& gv = parent_value(self, 1);
    Tensor* gx = parent_grad(self, 0);
    Tensor* gg = parent_grad(self, 1);
    Tensor* gb = parent_grad(self, 2);
    for (int r = 0; r < rows; ++r) {
      auto g = self.grad.row(r);
      Scalar m1 = 0, m2 = 0;
      for (int c = 0; c < cols; ++c) {
        const Scalar dxh = g[c] * gv[c];
        m1 += dxh;
        m2 += dxh * st.xhat(r, c);
        if (gg) (*gg)[c] += g[c] * st.xhat(r, c);
        if (gb) (*gb)[c] += g[c];
      }
      if (!gx) continue;
      m1 /= cols;
      m2 /= cols;
      for (int c = 0; c < cols; ++c) {
        const Scalar dxh = g[c] * gv[c];
        (*gx)(r, c) += st.inv_std[r] * (dxh - m1 - st.xhat(r, c) * m2);
      }
    }
  });
}

Var group_norm(const Var& x, int length, int groups, const Var& gamma, const Var& beta, Scalar eps) {
  const int channels = x.cols();
  if (length <= 0 || x.rows() % length != 0 || groups <= 0 || channels % groups != 0) {
    throw Error(Errc::kShapeMismatch, "group_norm: bad grouping for " + x.value().shape_str());
  }
  require(gamma.cols() == channels && beta.cols() == channels, "group_norm", x.value(), gamma.value());
  const int batch = x.rows() / length;
  const int cpg = channels / groups;
  const Scalar count = static_cast<Scalar>(length) * cpg;
  NormStats st{Tensor::like(x.value()), std::vector<Scalar>(static_cast<std::size_t>(batch) * groups)};
  Tensor out = Tensor::like(x.value());
  const Tensor& xv = x.value();
  for (int b = 0; b < batch; ++b) {
    for (int g = 0; g < groups; ++g) {
      Scalar mu = 0;
      for (int t = 0; t < length; ++t)
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) mu += xv(b * length + t, c);
      mu /= count;
      Scalar var = 0;
      for (int t = 0; t < length; ++t)
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
          const Scalar d = xv(b * length + t, c) - mu;
          var += d * d;
        }
      var /= count;
      const Scalar is = 1 / std::sqrt(var + eps);
      st.inv_std[b * groups + g] = is;
      for (int t = 0; t < length; ++t)
        for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
          const int r = b * length + t;
          const Scalar xh = (xv(r, c) - mu) * is;
          st.xhat(r, c) = xh;
          out(r, c) = xh * gamma.value()[c] + beta.value()[c];
        }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [st = std::move(st), batch, length, groups, cpg, count](Node& self) {
    const Tensor& gv = parent_value(self, 1);
    Tensor* gx = parent_grad(self, 0);
    Tensor* gg = parent_grad(self, 1);
    Tensor* gb = parent_grad(self, 2);
    for (int b = 0; b < batch; ++b) {
      for (int g = 0; g < groups; ++g) {
        Scalar m1 = 0, m2 = 0;
        for (int t = 0; t < length; ++t)
          for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const int r = b * length + t;
            const Scalar up = self.grad(r, c);
            const Scalar dxh = up * gv[c];
            m1 += dxh;
            m2 += dxh * st.xhat(r, c);
            if (gg) (*gg)[c] += up * st.xhat(r, c);
            if (gb) (*gb)[c] += up;
          }
        if (!gx) continue;
        m1 /= count;
        m2 /= count;
        const Scalar is = st.inv_std[b * groups + g];
        for (int t = 0; t < length; ++t)
          for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
            const int r = b * length + t;
            const Scalar dxh = self.grad(r, c) * gv[c];
            (*gx)(r, c) += is * (dxh - m1 - st.xhat(r, c) * m2);
          }
      }
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int q_len, int kv_len, int heads, Scalar scale) {
  const int d = q.cols();
  require(k.cols() == d && v.cols() == d, "attention width", q.value(), k.value());
  if (q_len <= 0 || kv_len <= 0 || q.rows() % q_len != 0 || k.rows() % kv_len != 0 ||
      q.rows() / q_len != k.rows() / kv_len || k.rows() != v.rows()) {
    throw Error(Errc::kShapeMismatch, "attention: inconsistent batch/length");
  }
  if (heads <= 0 || d % heads != 0) throw Error(Errc::kShapeMismatch, "attention: heads must divide width");
  const int batch = q.rows() / q_len;
  const int hd = d / heads;

  // probs laid out [batch][head][q][kv]
  Tensor probs(batch * heads * q_len, kv_len);
  Tensor out(q.rows(), d);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < q_len; ++i) {
        auto p = probs.row((b * heads + h) * q_len + i);
        const Scalar* qi = qv.ptr(b * q_len + i, h * hd);
        for (int j = 0; j < kv_len; ++j) {
          const Scalar* kj = kv.ptr(b * kv_len + j, h * hd);
          Scalar s = 0;
          for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
          p[j] = s * scale;
        }
      }
    }
  }
  kernels::omp::softmax_rows(probs.data(), probs.rows(), probs.cols());
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < q_len; ++i) {
        auto p = probs.row((b * heads + h) * q_len + i);
        Scalar* oi = out.ptr(b * q_len + i, h * hd);
        for (int j = 0; j < kv_len; ++j) {
          const Scalar* vj = vv.ptr(b * kv_len + j, h * hd);
          for (int c = 0; c < hd; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }

  return make_result(std::move(out), {q, k, v},
                     [probs = std::move(probs), batch, heads, hd, q_len, kv_len, scale](Node& self) {
    const Tensor& qv = parent_value(self, 0);
    const Tensor& kv = parent_value(self, 1);
    const Tensor& vv = parent_value(self, 2);
    Tensor* gq = parent_grad(self, 0);
    Tensor* gk = parent_grad(self, 1);
    Tensor* gvv = parent_grad(self, 2);
    std::vector<Scalar> dp(kv_len);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < q_len; ++i) {
          auto p = probs.row((b * heads + h) * q_len + i);
          const Scalar* go = self.grad.ptr(b * q_len + i, h * hd);
          Scalar dot = 0;
          for (int j = 0; j < kv_len; ++j) {
            const Scalar* vj = vv.ptr(b * kv_len + j, h * hd);
            Scalar s = 0;
            for (int c = 0; c < hd; ++c) s += go[c] * vj[c];
            dp[j] = s;
            dot += s * p[j];
            if (gvv) {
              Scalar* gvj = gvv->ptr(b * kv_len + j, h * hd);
              for (int c = 0; c < hd; ++c) gvj[c] += p[j] * go[c];
            }
          }
          for (int j = 0; j < kv_len; ++j) {
            const Scalar ds = p[j] * (dp[j] - dot) * scale;
            if (ds == 0) continue;
            if (gq) {
              Scalar* gqi = gq->ptr(b * q_len + i, h * hd);
              const Scalar* kj = kv.ptr(b * kv_len + j, h * hd);
              for (int c = 0; c < hd; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              Scalar* gkj = gk->ptr(b * kv_len + j, h * hd);
              const Scalar* qi = qv.ptr(b * q_len + i, h * hd);
              for (int c = 0; c < hd; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
}

Var blend(const Var& ls, const Var& lg, const Var& phi) {
  require(ls.value().same_shape(lg.value()), "blend endpoints", ls.value(), lg.value());
  require(phi.cols() == ls.cols(), "blend phi", ls.value(), phi.value());
  const int batch = ls.rows(), m = phi.rows(), w = ls.cols();
  Tensor out(batch * m, w);
  for (int b = 0; b < batch; ++b) {
    auto s = ls.value().row(b);
    auto g = lg.value().row(b);
    for (int j = 0; j < m; ++j) {
      auto p = phi.value().row(j);
      auto o = out.row(b * m + j);
      for (int c = 0; c < w; ++c) o[c] = (1 - p[c]) * s[c] + p[c] * g[c];
    }
  }
  return make_result(std::move(out), {ls, lg, phi}, [batch, m, w](Node& self) {
    const Tensor& sv = parent_value(self, 0);
    const Tensor& gv = parent_value(self, 1);
    const Tensor& pv = parent_value(self, 2);
    Tensor* gs = parent_grad(self, 0);
    Tensor* gg = parent_grad(self, 1);
    Tensor* gp = parent_grad(self, 2);
    for (int b = 0; b < batch; ++b) {
      for (int j = 0; j < m; ++j) {
        auto up = self.grad.row(b * m + j);
        for (int c = 0; c < w; ++c) {
          const Scalar p = pv(j, c);
          if (gs) (*gs)(b, c) += (1 - p) * up[c];
          if (gg) (*gg)(b, c) += p * up[c];
          if (gp) (*gp)(j, c) += up[c] * (gv(b, c) - sv(b, c));
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const int batch = logits.rows(), classes = logits.cols();
  if (static_cast<int>(labels.size()) != batch) throw Error(Errc::kShapeMismatch, "cross_entropy: label count");
  Tensor probs = logits.value();
  kernels::omp::softmax_rows(probs.data(), batch, classes);
  Scalar loss = 0;
  for (int b = 0; b < batch; ++b) {
    if (labels[b] < 0 || labels[b] >= classes) throw Error(Errc::kOutOfRange, "cross_entropy: label");
    loss -= std::log(std::max(probs(b, labels[b]), Scalar{1e-300}));
  }
  loss /= batch;
  return make_result(Tensor(1, 1, loss), {logits}, [probs = std::move(probs), labels, batch](Node& self) {
    Tensor& gl = *parent_grad(self, 0);
    const Scalar g = self.grad[0] / batch;
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < probs.cols(); ++c) {
        gl(b, c) += g * (probs(b, c) - (c == labels[b] ? 1 : 0));
      }
    }
  });
}

Var weighted_sq_error(const Var& x, const Tensor& target, const Tensor& weights) {
  require(x.value().same_shape(target), "weighted_sq_error target", x.value(), target);
  require(x.value().same_shape(weights), "weighted_sq_error weights", x.value(), weights);
  Scalar loss = 0;
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const Scalar d = xv[i] - target[i];
    loss += weights[i] * d * d;
  }
  return make_result(Tensor(1, 1, loss), {x}, [target, weights](Node& self) {
    const Tensor& xv = parent_value(self, 0);
    Tensor& gx = *parent_grad(self, 0);
    const Scalar g = self.grad[0];
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g * 2 * weights[i] * (xv[i] - target[i]);
  });
}

Var dropout(const Var& x, Scalar p, Rng& rng) {
  if (p <= 0) return x;
  Tensor mask = Tensor::like(x.value());
  const Scalar keep = 1 / (1 - p);
  for (auto& m : mask.vec()) m = rng.uniform() < p ? 0 : keep;
  return mul(x, constant(std::move(mask)));
}

}  // namespace mtid::nn
