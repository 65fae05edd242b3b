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

// Every backward pass is checked against central finite differences, over
// every parameter entry and every input entry. The scalar loss is a fixed
// random weighting of the output so all output entries contribute.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "tsdkit/nn.hpp"

using Catch::Approx;

namespace {

constexpr double kFdStep = 1e-5;

Eigen::MatrixXd randm(Eigen::Index rows, Eigen::Index cols, tsd::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

bool grad_close(double fd, double analytic) {
  return std::abs(fd - analytic) <= 1e-7 + 1e-5 * std::max(std::abs(fd), std::abs(analytic));
}

// Central finite differences over every parameter in the registry.
void check_param_gradients(tsd::ParamRegistry& reg, const std::function<double()>& loss,
                           const Eigen::VectorXd& analytic) {
  const Eigen::VectorXd theta = reg.values();
  REQUIRE(theta.size() == analytic.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t(i) = theta(i) + kFdStep;
    reg.set_values(t);
    const double up = loss();
    t(i) = theta(i) - kFdStep;
    reg.set_values(t);
    const double down = loss();
    const double fd = (up - down) / (2.0 * kFdStep);
    if (!grad_close(fd, analytic(i))) {
      CAPTURE(i, fd, analytic(i));
      REQUIRE(grad_close(fd, analytic(i)));
    }
  }
  reg.set_values(theta);
}

// Central finite differences over every entry of one input matrix.
void check_input_gradients(Eigen::MatrixXd& x, const std::function<double()>& loss,
                           const Eigen::MatrixXd& analytic) {
  REQUIRE(x.rows() == analytic.rows());
  REQUIRE(x.cols() == analytic.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double saved = x(i, j);
      x(i, j) = saved + kFdStep;
      const double up = loss();
      x(i, j) = saved - kFdStep;
      const double down = loss();
      x(i, j) = saved;
      const double fd = (up - down) / (2.0 * kFdStep);
      if (!grad_close(fd, analytic(i, j))) {
        CAPTURE(i, j, fd, analytic(i, j));
        REQUIRE(grad_close(fd, analytic(i, j)));
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

TEST_CASE("gelu matches its closed form and stays stable", "[nn]") {
  CHECK(tsd::gelu_scalar(0.0) == Approx(0.0).margin(1e-15));
  CHECK(tsd::gelu_scalar(1.0) == Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(tsd::gelu_scalar(10.0) == Approx(10.0).epsilon(1e-12));
  CHECK(tsd::gelu_scalar(-10.0) == Approx(0.0).margin(1e-12));
  CHECK(tsd::sigmoid(1000.0) == Approx(1.0));
  CHECK(tsd::sigmoid(-1000.0) == Approx(0.0).margin(1e-12));
  CHECK(std::isfinite(tsd::sigmoid(-1000.0)));
}

TEST_CASE("gelu backward matches finite differences", "[nn][grad]") {
  tsd::Rng rng(11);
  Eigen::MatrixXd x = randm(4, 5, rng);
  const Eigen::MatrixXd p = randm(4, 5, rng);

  const auto loss = [&]() { return tsd::gelu(x).cwiseProduct(p).sum(); };
  const Eigen::MatrixXd dx = tsd::gelu_backward(p, x);
  check_input_gradients(x, loss, dx);
}

TEST_CASE("softmax rows are normalized and shift invariant", "[nn]") {
  tsd::Rng rng(3);
  const Eigen::MatrixXd s = randm(5, 7, rng);
  const Eigen::MatrixXd a = tsd::softmax_rows(s);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    CHECK(a.row(i).sum() == Approx(1.0).epsilon(1e-12));
    CHECK(a.row(i).minCoeff() > 0.0);
  }
  const Eigen::MatrixXd shifted =
      tsd::softmax_rows(s + Eigen::MatrixXd::Constant(s.rows(), s.cols(), 123.0));
  CHECK((shifted - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("param registry flattens in registration order", "[nn]") {
  tsd::Param a("a", 2, 2), b("b", 1, 3);
  a.value << 1, 3, 2, 4;  // column-major flat order: 1 2 3 4
  b.value << 5, 6, 7;
  tsd::ParamRegistry reg;
  reg.add(a);
  reg.add(b);
  REQUIRE(reg.size() == 7);

  const Eigen::VectorXd flat = reg.values();
  Eigen::VectorXd want(7);
  want << 1, 2, 3, 4, 5, 6, 7;
  CHECK((flat - want).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd update = want * 2.0;
  reg.set_values(update);
  CHECK(a.value(0, 1) == 6.0);
  CHECK(b.value(0, 2) == 14.0);

  Eigen::VectorXd wrong(6);
  CHECK_THROWS(reg.set_values(wrong));

  a.grad.setOnes();
  reg.zero_grads();
  CHECK(a.grad.cwiseAbs().maxCoeff() == 0.0);
}

// ---------------------------------------------------------------------------
// Layer gradients
// ---------------------------------------------------------------------------

TEST_CASE("linear gradients", "[nn][grad]") {
  tsd::Rng rng(21);
  tsd::Linear lin("lin", 5, 3);
  lin.init(rng);
  Eigen::MatrixXd x = randm(7, 5, rng);
  const Eigen::MatrixXd p = randm(7, 3, rng);

  const auto loss = [&]() {
    tsd::Linear::Cache c;
    return lin.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  lin.collect(reg);
  reg.zero_grads();
  tsd::Linear::Cache c;
  lin.forward(x, c);
  const Eigen::MatrixXd dx = lin.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);
}

TEST_CASE("layer norm gradients", "[nn][grad]") {
  tsd::Rng rng(22);
  tsd::LayerNorm ln("ln", 6);
  // Move gamma/beta off their identity init so their gradients interact.
  for (int i = 0; i < 6; ++i) {
    ln.gamma.value(i, 0) = rng.uniform(0.5, 1.5);
    ln.beta.value(i, 0) = rng.uniform(-0.5, 0.5);
  }
  Eigen::MatrixXd x = randm(5, 6, rng);
  const Eigen::MatrixXd p = randm(5, 6, rng);

  const auto loss = [&]() {
    tsd::LayerNorm::Cache c;
    return ln.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  ln.collect(reg);
  reg.zero_grads();
  tsd::LayerNorm::Cache c;
  ln.forward(x, c);
  const Eigen::MatrixXd dx = ln.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);
}

TEST_CASE("layer norm output is normalized", "[nn]") {
  tsd::Rng rng(23);
  tsd::LayerNorm ln("ln", 8);
  const Eigen::MatrixXd x = randm(4, 8, rng) * 3.0;
  tsd::LayerNorm::Cache c;
  const Eigen::MatrixXd y = ln.forward(x, c);
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    CHECK(y.row(t).mean() == Approx(0.0).margin(1e-9));
    CHECK(y.row(t).squaredNorm() / 8.0 == Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("depthwise conv gradients", "[nn][grad]") {
  tsd::Rng rng(24);
  tsd::DepthwiseConv1d conv("dw", 4, 7);
  conv.init(rng);
  for (int i = 0; i < 4; ++i) conv.b.value(i, 0) = rng.uniform(-0.1, 0.1);
  Eigen::MatrixXd x = randm(9, 4, rng);
  const Eigen::MatrixXd p = randm(9, 4, rng);

  const auto loss = [&]() {
    tsd::DepthwiseConv1d::Cache c;
    return conv.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  conv.collect(reg);
  reg.zero_grads();
  tsd::DepthwiseConv1d::Cache c;
  conv.forward(x, c);
  const Eigen::MatrixXd dx = conv.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);

  CHECK_THROWS(tsd::DepthwiseConv1d("bad", 4, 6));
}

TEST_CASE("depthwise conv keeps channels separate", "[nn]") {
  tsd::DepthwiseConv1d conv("dw", 2, 3);
  conv.w.value.setZero();
  conv.w.value(1, 0) = 1.0;  // identity tap on channel 0 only
  Eigen::MatrixXd x(5, 2);
  x.col(0) << 1, 2, 3, 4, 5;
  x.col(1).setConstant(7.0);
  tsd::DepthwiseConv1d::Cache c;
  const Eigen::MatrixXd y = conv.forward(x, c);
  CHECK((y.col(0) - x.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("patch downsampler gradients with ragged tail", "[nn][grad]") {
  tsd::Rng rng(25);
  tsd::PatchDownsample1d down("down", 3, 5, 4);
  down.init(rng);
  Eigen::MatrixXd x = randm(10, 3, rng);  // 10 = 2 full patches + tail of 2
  const Eigen::MatrixXd p = randm(3, 5, rng);

  const auto loss = [&]() {
    tsd::PatchDownsample1d::Cache c;
    return down.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  down.collect(reg);
  reg.zero_grads();
  tsd::PatchDownsample1d::Cache c;
  REQUIRE(down.forward(x, c).rows() == 3);
  const Eigen::MatrixXd dx = down.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);
}

TEST_CASE("patch downsampler output length is ceil(T / stride)", "[nn]") {
  tsd::Rng rng(26);
  tsd::PatchDownsample1d down("down", 2, 2, 4);
  down.init(rng);
  for (const int t_in : {1, 3, 4, 5, 8, 9}) {
    Eigen::MatrixXd x = randm(t_in, 2, rng);
    tsd::PatchDownsample1d::Cache c;
    CHECK(down.forward(x, c).rows() == (t_in + 3) / 4);
  }
}

TEST_CASE("feature average pooling", "[nn][grad]") {
  tsd::Rng rng(27);
  tsd::AvgPoolFeatures pool(4);
  Eigen::MatrixXd x = randm(3, 8, rng);
  const Eigen::MatrixXd p = randm(3, 2, rng);

  const auto loss = [&]() { return pool.forward(x).cwiseProduct(p).sum(); };
  const Eigen::MatrixXd dx = pool.backward(p);
  check_input_gradients(x, loss, dx);

  // Pooling averages consecutive feature groups.
  const Eigen::MatrixXd y = pool.forward(x);
  CHECK(y(1, 0) == Approx(x.row(1).segment(0, 4).mean()));
  CHECK(y(2, 1) == Approx(x.row(2).segment(4, 4).mean()));

  Eigen::MatrixXd bad = randm(3, 7, rng);
  CHECK_THROWS(pool.forward(bad));
}

TEST_CASE("gru direction gradients", "[nn][grad]") {
  tsd::Rng rng(28);
  tsd::GruDirection gru("gru", 5, 4);
  gru.init(rng);
  Eigen::MatrixXd x = randm(7, 5, rng);
  const Eigen::MatrixXd p = randm(7, 4, rng);

  const auto loss = [&]() {
    tsd::GruDirection::Cache c;
    return gru.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  gru.collect(reg);
  reg.zero_grads();
  tsd::GruDirection::Cache c;
  gru.forward(x, c);
  const Eigen::MatrixXd dx = gru.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);
}

TEST_CASE("bidirectional gru gradients", "[nn][grad]") {
  tsd::Rng rng(29);
  tsd::BiGru gru("bigru", 5, 3);
  gru.init(rng);
  Eigen::MatrixXd x = randm(6, 5, rng);
  const Eigen::MatrixXd p = randm(6, 6, rng);

  const auto loss = [&]() {
    tsd::BiGru::Cache c;
    return gru.forward(x, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  gru.collect(reg);
  reg.zero_grads();
  tsd::BiGru::Cache c;
  gru.forward(x, c);
  const Eigen::MatrixXd dx = gru.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x, loss, dx);
}

TEST_CASE("reversing the input swaps the gru directions when weights are tied", "[nn]") {
  tsd::Rng rng(30);
  tsd::BiGru gru("bigru", 4, 3);
  gru.init(rng);
  gru.bwd.wx.value = gru.fwd.wx.value;
  gru.bwd.wh.value = gru.fwd.wh.value;
  gru.bwd.bx.value = gru.fwd.bx.value;
  gru.bwd.bh.value = gru.fwd.bh.value;

  const Eigen::MatrixXd x = randm(8, 4, rng);
  const Eigen::MatrixXd xr = x.colwise().reverse();
  tsd::BiGru::Cache c1, c2;
  const Eigen::MatrixXd y = gru.forward(x, c1);
  const Eigen::MatrixXd yr = gru.forward(xr, c2);

  const Eigen::MatrixXd y_rev = y.colwise().reverse();
  CHECK((yr.leftCols(3) - y_rev.rightCols(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((yr.rightCols(3) - y_rev.leftCols(3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention over a single key returns that value", "[nn]") {
  tsd::Rng rng(31);
  const Eigen::MatrixXd q = randm(5, 4, rng);
  const Eigen::MatrixXd k = randm(1, 4, rng);
  const Eigen::MatrixXd v = randm(1, 4, rng);
  const Eigen::MatrixXd out = tsd::scaled_dot_attention(q, k, v);
  REQUIRE(out.rows() == 5);
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK((out.row(i) - v.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention weights favor the matching key", "[nn]") {
  Eigen::MatrixXd q(1, 2), k(2, 2), v(2, 2);
  q << 10.0, 0.0;
  k << 10.0, 0.0, -10.0, 0.0;
  v << 1.0, 0.0, 0.0, 1.0;
  const Eigen::MatrixXd out = tsd::scaled_dot_attention(q, k, v);
  CHECK(out(0, 0) > 0.99);
  CHECK(out(0, 1) < 0.01);
}

TEST_CASE("multi-head attention gradients", "[nn][grad]") {
  tsd::Rng rng(32);
  tsd::MultiHeadAttention mha("mha", 8, 2);
  mha.init(rng);
  Eigen::MatrixXd q = randm(6, 8, rng);
  Eigen::MatrixXd kv = randm(4, 8, rng);
  const Eigen::MatrixXd p = randm(6, 8, rng);

  const auto loss = [&]() {
    tsd::MultiHeadAttention::Cache c;
    return mha.forward(q, kv, c).cwiseProduct(p).sum();
  };

  tsd::ParamRegistry reg;
  mha.collect(reg);
  reg.zero_grads();
  tsd::MultiHeadAttention::Cache c;
  mha.forward(q, kv, c);
  const auto [dq, dkv] = mha.backward(p, c);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(q, loss, dq);
  check_input_gradients(kv, loss, dkv);

  CHECK_THROWS(tsd::MultiHeadAttention("bad", 8, 3));
}

TEST_CASE("softmax backward matches finite differences", "[nn][grad]") {
  tsd::Rng rng(33);
  Eigen::MatrixXd s = randm(4, 6, rng);
  const Eigen::MatrixXd p = randm(4, 6, rng);

  const auto loss = [&]() { return tsd::softmax_rows(s).cwiseProduct(p).sum(); };
  const Eigen::MatrixXd a = tsd::softmax_rows(s);
  const Eigen::MatrixXd ds = tsd::softmax_rows_backward(p, a);
  check_input_gradients(s, loss, ds);
}

TEST_CASE("shared layers accumulate gradients from every call site", "[nn][grad]") {
  // One Linear applied to two inputs; total loss touches both paths, and the
  // parameter gradient must be the sum of the two contributions.
  tsd::Rng rng(34);
  tsd::Linear lin("shared", 4, 3);
  lin.init(rng);
  Eigen::MatrixXd x1 = randm(5, 4, rng);
  Eigen::MatrixXd x2 = randm(2, 4, rng);
  const Eigen::MatrixXd p1 = randm(5, 3, rng);
  const Eigen::MatrixXd p2 = randm(2, 3, rng);

  const auto loss = [&]() {
    tsd::Linear::Cache c1, c2;
    return lin.forward(x1, c1).cwiseProduct(p1).sum() +
           lin.forward(x2, c2).cwiseProduct(p2).sum();
  };

  tsd::ParamRegistry reg;
  lin.collect(reg);
  reg.zero_grads();
  tsd::Linear::Cache c1, c2;
  lin.forward(x1, c1);
  lin.forward(x2, c2);
  const Eigen::MatrixXd dx1 = lin.backward(p1, c1);
  const Eigen::MatrixXd dx2 = lin.backward(p2, c2);

  check_param_gradients(reg, loss, reg.grads());
  check_input_gradients(x1, loss, dx1);
  check_input_gradients(x2, loss, dx2);
}
