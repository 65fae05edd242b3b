/* Copyright 2026 The tsdkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Neural network layers with hand-derived backward passes.
//
// Conventions shared by every layer here:
//   * Activations are Eigen::MatrixXd with time on rows and features on
//     columns, so a sequence is T x C.
//   * forward(x, cache) is const and writes whatever backward needs into the
//     caller-owned cache. One cache per call site, so a layer applied twice
//     (a weight-shared encoder, say) gets two caches and backward simply
//     accumulates both contributions into the same grad buffers.
//   * backward(dy, cache) returns dL/dx and ADDS dL/dparam into each Param's
//     grad member. Callers zero grads between steps via ParamRegistry.
//
// All math is double precision; gradients are checked against central
// finite differences in the test suite.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tsdkit/rng.hpp"

namespace tsd {

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

// Flat view over a set of parameters, used by the optimizer, checkpointing,
// and the finite-difference tests. Registration order is the canonical order.
class ParamRegistry {
 public:
  void add(Param& p) { params_.push_back(&p); }

  const std::vector<Param*>& params() const { return params_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const Param* p : params_) n += p->size();
    return n;
  }

  Eigen::VectorXd values() const { return gather(false); }
  Eigen::VectorXd grads() const { return gather(true); }

  void set_values(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != size())
      throw std::invalid_argument("ParamRegistry::set_values: size mismatch");
    Eigen::Index at = 0;
    for (Param* p : params_) {
      const Eigen::Index n = p->value.size();
      // Eigen matrices are column-major; reshaped() follows storage order.
      p->value.reshaped() = flat.segment(at, n);
      at += n;
    }
  }

  void zero_grads() {
    for (Param* p : params_) p->grad.setZero();
  }

 private:
  Eigen::VectorXd gather(bool grads) const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
    Eigen::Index at = 0;
    for (const Param* p : params_) {
      const Eigen::MatrixXd& m = grads ? p->grad : p->value;
      flat.segment(at, m.size()) = m.reshaped();
      at += m.size();
    }
    return flat;
  }

  std::vector<Param*> params_;
};

// ---------------------------------------------------------------------------
// Initializers and scalar helpers.
// ---------------------------------------------------------------------------

inline void uniform_init(Param& p, double lo, double hi, Rng& rng) {
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = rng.uniform(lo, hi);
}

inline void xavier_uniform_init(Param& p, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  uniform_init(p, -limit, limit, rng);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Exact (erf-based) GELU and its derivative.
inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

inline Eigen::MatrixXd gelu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return gelu_scalar(v); });
}

inline Eigen::MatrixXd gelu_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& x) {
  return dy.cwiseProduct(x.unaryExpr([](double v) { return gelu_grad_scalar(v); }));
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

// d/dscores of softmax_rows, given upstream dA and the softmax output A.
inline Eigen::MatrixXd softmax_rows_backward(const Eigen::MatrixXd& dA,
                                             const Eigen::MatrixXd& A) {
  Eigen::MatrixXd dS(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double dot = dA.row(i).dot(A.row(i));
    dS.row(i) =
        A.row(i).cwiseProduct(dA.row(i) - Eigen::RowVectorXd::Constant(A.cols(), dot));
  }
  return dS;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : w(name + ".weight", in, out), b(name + ".bias", out, 1) {}

  void init(Rng& rng) { xavier_uniform_init(w, static_cast<int>(w.value.rows()),
                                            static_cast<int>(w.value.cols()), rng); }

  struct Cache {
    Eigen::MatrixXd x;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    c.x = x;
    return (x * w.value).rowwise() + b.value.col(0).transpose();
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& c) {
    w.grad += c.x.transpose() * dy;
    b.grad.col(0) += dy.colwise().sum().transpose();
    return dy * w.value.transpose();
  }

  void collect(ParamRegistry& r) {
    r.add(w);
    r.add(b);
  }

  int in_dim() const { return static_cast<int>(w.value.rows()); }
  int out_dim() const { return static_cast<int>(w.value.cols()); }

  Param w, b;
};

// ---------------------------------------------------------------------------
// LayerNorm over the feature (column) axis, per time step.
// ---------------------------------------------------------------------------

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(const std::string& name, int dim, double eps = 1e-6)
      : gamma(name + ".gamma", dim, 1), beta(name + ".beta", dim, 1), eps_(eps) {
    gamma.value.setOnes();
  }

  void init(Rng&) {
    gamma.value.setOnes();
    beta.value.setZero();
  }

  struct Cache {
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    const Eigen::Index t_len = x.rows();
    const Eigen::Index dim = x.cols();
    c.xhat.resize(t_len, dim);
    c.inv_std.resize(t_len);
    Eigen::MatrixXd y(t_len, dim);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const double mu = x.row(t).mean();
      const Eigen::RowVectorXd centered = x.row(t).array() - mu;
      const double var = centered.squaredNorm() / static_cast<double>(dim);
      const double inv_std = 1.0 / std::sqrt(var + eps_);
      c.inv_std(t) = inv_std;
      c.xhat.row(t) = centered * inv_std;
      y.row(t) = c.xhat.row(t).cwiseProduct(gamma.value.col(0).transpose()) +
                 beta.value.col(0).transpose();
    }
    return y;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& c) {
    const Eigen::Index t_len = dy.rows();
    const Eigen::Index dim = dy.cols();
    Eigen::MatrixXd dx(t_len, dim);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(gamma.value.col(0).transpose());
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = dxhat.cwiseProduct(c.xhat.row(t)).mean();
      dx.row(t) = (dxhat.array() - mean_dxhat - c.xhat.row(t).array() * mean_dxhat_xhat) *
                  c.inv_std(t);
      gamma.grad.col(0) += dy.row(t).cwiseProduct(c.xhat.row(t)).transpose();
      beta.grad.col(0) += dy.row(t).transpose();
    }
    return dx;
  }

  void collect(ParamRegistry& r) {
    r.add(gamma);
    r.add(beta);
  }

  Param gamma, beta;

 private:
  double eps_ = 1e-6;
};

// ---------------------------------------------------------------------------
// Depthwise temporal convolution, same-length (zero padded both sides).
// ---------------------------------------------------------------------------

class DepthwiseConv1d {
 public:
  DepthwiseConv1d() = default;
  DepthwiseConv1d(const std::string& name, int channels, int kernel)
      : w(name + ".weight", kernel, channels), b(name + ".bias", channels, 1),
        kernel_(kernel), pad_((kernel - 1) / 2) {
    if (kernel % 2 == 0) throw std::invalid_argument("DepthwiseConv1d: kernel must be odd");
  }

  void init(Rng& rng) { xavier_uniform_init(w, kernel_, kernel_, rng); }

  struct Cache {
    Eigen::MatrixXd x;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    c.x = x;
    const Eigen::Index t_len = x.rows();
    const Eigen::Index ch = x.cols();
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(t_len, ch);
    for (int i = 0; i < kernel_; ++i) {
      const Eigen::RowVectorXd wi = w.value.row(i);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        const Eigen::Index s = t + i - pad_;
        if (s < 0 || s >= t_len) continue;
        y.row(t) += x.row(s).cwiseProduct(wi);
      }
    }
    y.rowwise() += b.value.col(0).transpose();
    return y;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& c) {
    const Eigen::Index t_len = dy.rows();
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(t_len, dy.cols());
    for (int i = 0; i < kernel_; ++i) {
      for (Eigen::Index t = 0; t < t_len; ++t) {
        const Eigen::Index s = t + i - pad_;
        if (s < 0 || s >= t_len) continue;
        dx.row(s) += dy.row(t).cwiseProduct(w.value.row(i));
        w.grad.row(i) += dy.row(t).cwiseProduct(c.x.row(s));
      }
    }
    b.grad.col(0) += dy.colwise().sum().transpose();
    return dx;
  }

  void collect(ParamRegistry& r) {
    r.add(w);
    r.add(b);
  }

  Param w, b;

 private:
  int kernel_ = 0;
  Eigen::Index pad_ = 0;
};

// ---------------------------------------------------------------------------
// Patchify downsampler: non-overlapping conv with kernel == stride. The tail
// is zero padded on the right, so T_out = ceil(T_in / stride).
// ---------------------------------------------------------------------------

class PatchDownsample1d {
 public:
  PatchDownsample1d() = default;
  PatchDownsample1d(const std::string& name, int in_channels, int out_channels, int stride)
      : w(name + ".weight", stride * in_channels, out_channels),
        b(name + ".bias", out_channels, 1), in_channels_(in_channels), stride_(stride) {}

  void init(Rng& rng) {
    xavier_uniform_init(w, stride_ * in_channels_, static_cast<int>(w.value.cols()), rng);
  }

  struct Cache {
    Eigen::MatrixXd patches;  // T_out x (stride * in_channels)
    Eigen::Index t_in = 0;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    const Eigen::Index t_in = x.rows();
    const Eigen::Index t_out = (t_in + stride_ - 1) / stride_;
    c.t_in = t_in;
    c.patches = Eigen::MatrixXd::Zero(t_out, static_cast<Eigen::Index>(stride_) * in_channels_);
    for (Eigen::Index t = 0; t < t_out; ++t) {
      for (int i = 0; i < stride_; ++i) {
        const Eigen::Index s = t * stride_ + i;
        if (s >= t_in) break;
        c.patches.row(t).segment(static_cast<Eigen::Index>(i) * in_channels_, in_channels_) =
            x.row(s);
      }
    }
    return (c.patches * w.value).rowwise() + b.value.col(0).transpose();
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& c) {
    w.grad += c.patches.transpose() * dy;
    b.grad.col(0) += dy.colwise().sum().transpose();
    const Eigen::MatrixXd dpatches = dy * w.value.transpose();
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(c.t_in, in_channels_);
    for (Eigen::Index t = 0; t < dpatches.rows(); ++t) {
      for (int i = 0; i < stride_; ++i) {
        const Eigen::Index s = t * stride_ + i;
        if (s >= c.t_in) break;
        dx.row(s) =
            dpatches.row(t).segment(static_cast<Eigen::Index>(i) * in_channels_, in_channels_);
      }
    }
    return dx;
  }

  void collect(ParamRegistry& r) {
    r.add(w);
    r.add(b);
  }

  int stride() const { return stride_; }

  Param w, b;

 private:
  int in_channels_ = 0;
  int stride_ = 0;
};

// ---------------------------------------------------------------------------
// Average pooling along the FEATURE axis (time is preserved).
// ---------------------------------------------------------------------------

class AvgPoolFeatures {
 public:
  AvgPoolFeatures() = default;
  explicit AvgPoolFeatures(int factor) : factor_(factor) {}

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    if (factor_ <= 0 || x.cols() % factor_ != 0)
      throw std::invalid_argument("AvgPoolFeatures: feature dim not divisible by pool factor");
    const Eigen::Index out_cols = x.cols() / factor_;
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), out_cols);
    for (Eigen::Index j = 0; j < out_cols; ++j)
      for (int i = 0; i < factor_; ++i) y.col(j) += x.col(j * factor_ + i);
    return y / static_cast<double>(factor_);
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const {
    Eigen::MatrixXd dx(dy.rows(), dy.cols() * factor_);
    for (Eigen::Index j = 0; j < dy.cols(); ++j)
      for (int i = 0; i < factor_; ++i)
        dx.col(j * factor_ + i) = dy.col(j) / static_cast<double>(factor_);
    return dx;
  }

  int factor() const { return factor_; }

 private:
  int factor_ = 1;
};

// ---------------------------------------------------------------------------
// GRU, one direction. Gate convention (PyTorch order r, z, n):
//   r_t = sigmoid(x_t W_r + b_xr + h_{t-1} U_r + b_hr)
//   z_t = sigmoid(x_t W_z + b_xz + h_{t-1} U_z + b_hz)
//   n_t = tanh(x_t W_n + b_xn + r_t (.) (h_{t-1} U_n + b_hn))
//   h_t = (1 - z_t) (.) n_t + z_t (.) h_{t-1}
// Weights are stored with the three gates as column blocks [r | z | n].
// ---------------------------------------------------------------------------

class GruDirection {
 public:
  GruDirection() = default;
  GruDirection(const std::string& name, int input, int hidden)
      : wx(name + ".wx", input, 3 * hidden), wh(name + ".wh", hidden, 3 * hidden),
        bx(name + ".bx", 3 * hidden, 1), bh(name + ".bh", 3 * hidden, 1), hidden_(hidden) {}

  void init(Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_));
    uniform_init(wx, -k, k, rng);
    uniform_init(wh, -k, k, rng);
    uniform_init(bx, -k, k, rng);
    uniform_init(bh, -k, k, rng);
  }

  struct Cache {
    Eigen::MatrixXd x;        // T x I
    Eigen::MatrixXd h_prev;   // T x H, row t holds h_{t-1}
    Eigen::MatrixXd r, z, n;  // T x H each
    Eigen::MatrixXd hn_pre;   // T x H, h_{t-1} U_n + b_hn
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    const Eigen::Index t_len = x.rows();
    const int h = hidden_;
    c.x = x;
    c.h_prev.setZero(t_len, h);
    c.r.resize(t_len, h);
    c.z.resize(t_len, h);
    c.n.resize(t_len, h);
    c.hn_pre.resize(t_len, h);
    Eigen::MatrixXd out(t_len, h);
    Eigen::RowVectorXd h_state = Eigen::RowVectorXd::Zero(h);
    for (Eigen::Index t = 0; t < t_len; ++t) {
      c.h_prev.row(t) = h_state;
      const Eigen::RowVectorXd gx = x.row(t) * wx.value + bx.value.col(0).transpose();
      const Eigen::RowVectorXd gh = h_state * wh.value + bh.value.col(0).transpose();
      for (int j = 0; j < h; ++j) {
        c.r(t, j) = sigmoid(gx(j) + gh(j));
        c.z(t, j) = sigmoid(gx(h + j) + gh(h + j));
        c.hn_pre(t, j) = gh(2 * h + j);
        c.n(t, j) = std::tanh(gx(2 * h + j) + c.r(t, j) * c.hn_pre(t, j));
      }
      h_state = (1.0 - c.z.row(t).array()) * c.n.row(t).array() +
                c.z.row(t).array() * h_state.array();
      out.row(t) = h_state;
    }
    return out;
  }

  // dH holds dL/dh_t for every step's emitted hidden state.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dH, const Cache& c) {
    const Eigen::Index t_len = dH.rows();
    const int h = hidden_;
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(t_len, c.x.cols());
    Eigen::RowVectorXd dh_carry = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd dgx(3 * h), dgh(3 * h);
    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
      const Eigen::ArrayXd dh = (dH.row(t) + dh_carry).transpose().array();
      const Eigen::ArrayXd r = c.r.row(t).transpose().array();
      const Eigen::ArrayXd z = c.z.row(t).transpose().array();
      const Eigen::ArrayXd n = c.n.row(t).transpose().array();
      const Eigen::ArrayXd hp = c.h_prev.row(t).transpose().array();
      const Eigen::ArrayXd hn = c.hn_pre.row(t).transpose().array();

      const Eigen::ArrayXd dz = dh * (hp - n);
      const Eigen::ArrayXd dn = dh * (1.0 - z);
      const Eigen::ArrayXd dn_pre = dn * (1.0 - n.square());
      const Eigen::ArrayXd dr = dn_pre * hn;
      const Eigen::ArrayXd dhn_pre = dn_pre * r;
      const Eigen::ArrayXd dr_pre = dr * r * (1.0 - r);
      const Eigen::ArrayXd dz_pre = dz * z * (1.0 - z);

      dgx.segment(0, h) = dr_pre.transpose();
      dgx.segment(h, h) = dz_pre.transpose();
      dgx.segment(2 * h, h) = dn_pre.transpose();
      dgh.segment(0, h) = dr_pre.transpose();
      dgh.segment(h, h) = dz_pre.transpose();
      dgh.segment(2 * h, h) = dhn_pre.transpose();

      wx.grad += c.x.row(t).transpose() * dgx;
      wh.grad += c.h_prev.row(t).transpose() * dgh;
      bx.grad.col(0) += dgx.transpose();
      bh.grad.col(0) += dgh.transpose();

      dx.row(t) = dgx * wx.value.transpose();
      dh_carry = (dh * z).matrix().transpose() + dgh * wh.value.transpose();
    }
    return dx;
  }

  void collect(ParamRegistry& r) {
    r.add(wx);
    r.add(wh);
    r.add(bx);
    r.add(bh);
  }

  int hidden() const { return hidden_; }

  Param wx, wh, bx, bh;

 private:
  int hidden_ = 0;
};

// Bidirectional GRU. Output per step is [forward state | backward state],
// so with hidden = F/2 per direction the output width equals the input F.
class BiGru {
 public:
  BiGru() = default;
  BiGru(const std::string& name, int input, int hidden)
      : fwd(name + ".fwd", input, hidden), bwd(name + ".bwd", input, hidden) {}

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }

  struct Cache {
    GruDirection::Cache fwd, bwd;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& c) const {
    const Eigen::MatrixXd out_f = fwd.forward(x, c.fwd);
    const Eigen::MatrixXd out_b = bwd.forward(x.colwise().reverse(), c.bwd);
    Eigen::MatrixXd out(x.rows(), out_f.cols() + out_b.cols());
    out.leftCols(out_f.cols()) = out_f;
    out.rightCols(out_b.cols()) = out_b.colwise().reverse();
    return out;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& c) {
    const int h = fwd.hidden();
    Eigen::MatrixXd dx = fwd.backward(dy.leftCols(h), c.fwd);
    const Eigen::MatrixXd dy_b = dy.rightCols(h).colwise().reverse();
    dx += bwd.backward(dy_b, c.bwd).colwise().reverse();
    return dx;
  }

  void collect(ParamRegistry& r) {
    fwd.collect(r);
    bwd.collect(r);
  }

  GruDirection fwd, bwd;
};

// ---------------------------------------------------------------------------
// Scaled dot-product attention and the multi-head wrapper.
// ---------------------------------------------------------------------------

// Single-head attention core, exposed for direct unit testing.
inline Eigen::MatrixXd scaled_dot_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                            const Eigen::MatrixXd& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(q * k.transpose() * scale) * v;
}

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads)
      : wq(name + ".q", dim, dim), wk(name + ".k", dim, dim), wv(name + ".v", dim, dim),
        wo(name + ".o", dim, dim), heads_(heads), dim_(dim) {
    if (dim % heads != 0)
      throw std::invalid_argument("MultiHeadAttention: dim must be divisible by heads");
  }

  void init(Rng& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
  }

  struct Cache {
    Linear::Cache cq, ck, cv, co;
    Eigen::MatrixXd q, k, v;            // projected, T x dim
    std::vector<Eigen::MatrixXd> attn;  // per head, T_q x T_k
    Eigen::MatrixXd ctx;                // concatenated head outputs, T_q x dim
  };

  // query: T_q x dim (mixture frames), kv: T_k x dim (reference frames).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& query, const Eigen::MatrixXd& kv,
                          Cache& c) const {
    const int dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    c.q = wq.forward(query, c.cq);
    c.k = wk.forward(kv, c.ck);
    c.v = wv.forward(kv, c.cv);
    c.attn.assign(static_cast<std::size_t>(heads_), Eigen::MatrixXd());
    c.ctx.resize(query.rows(), dim_);
    for (int h = 0; h < heads_; ++h) {
      const auto qh = c.q.middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto kh = c.k.middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const auto vh = c.v.middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      c.attn[static_cast<std::size_t>(h)] = softmax_rows(qh * kh.transpose() * scale);
      c.ctx.middleCols(static_cast<Eigen::Index>(h) * dh, dh) =
          c.attn[static_cast<std::size_t>(h)] * vh;
    }
    return wo.forward(c.ctx, c.co);
  }

  // Returns {d_query, d_kv}.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> backward(const Eigen::MatrixXd& dy, Cache& c) {
    const int dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::MatrixXd dctx = wo.backward(dy, c.co);
    Eigen::MatrixXd dq(c.q.rows(), dim_), dk(c.k.rows(), dim_), dv(c.v.rows(), dim_);
    for (int h = 0; h < heads_; ++h) {
      const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
      const auto qh = c.q.middleCols(off, dh);
      const auto kh = c.k.middleCols(off, dh);
      const auto vh = c.v.middleCols(off, dh);
      const Eigen::MatrixXd& attn = c.attn[static_cast<std::size_t>(h)];
      const auto dctx_h = dctx.middleCols(off, dh);
      const Eigen::MatrixXd dattn = dctx_h * vh.transpose();
      dv.middleCols(off, dh) = attn.transpose() * dctx_h;
      const Eigen::MatrixXd dscores = softmax_rows_backward(dattn, attn) * scale;
      dq.middleCols(off, dh) = dscores * kh;
      dk.middleCols(off, dh) = dscores.transpose() * qh;
    }
    const Eigen::MatrixXd d_query = wq.backward(dq, c.cq);
    Eigen::MatrixXd d_kv = wk.backward(dk, c.ck);
    d_kv += wv.backward(dv, c.cv);
    return {d_query, d_kv};
  }

  void collect(ParamRegistry& r) {
    wq.collect(r);
    wk.collect(r);
    wv.collect(r);
    wo.collect(r);
  }

  int heads() const { return heads_; }
  int dim() const { return dim_; }

  Linear wq, wk, wv, wo;

 private:
  int heads_ = 0;
  int dim_ = 0;
};

}  // namespace tsd
