// Gradient checks: every op's analytic gradient is compared against central
// finite differences of its forward pass. Single-precision forward passes
// limit how small the step and the tolerance can usefully be.

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "lumos/ad/ops.hpp"
#include "lumos/ad/tape.hpp"
#include "lumos/core/rng.hpp"

using namespace lumos;
using namespace lumos::ad;

namespace {

Tensor randn(Rng& rng, std::vector<int64_t> shape, float scale = 1.0f) {
  Tensor x(std::move(shape));
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = (float)rng.normal(0.0, scale);
  return x;
}

// Worst relative error between analytic dL/dx and central differences over a
// dozen randomly chosen coordinates. f must build a scalar loss from x.
double fd_worst(Tensor x0, const std::function<Var(Tape&, Var)>& f) {
  Tape t;
  Var x = t.leaf(x0, true);
  Var loss = f(t, x);
  t.backward(loss);
  const Tensor g = t.grad(x).clone();

  Rng pick(42);
  double worst = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int64_t i = pick.uniform_int(x0.numel());
    const float h = 1e-2f;
    const float orig = x0[i];
    x0[i] = orig + h;
    Tape tp;
    Var lp = f(tp, tp.leaf(x0, false));
    x0[i] = orig - h;
    Tape tm;
    Var lm = f(tm, tm.leaf(x0, false));
    x0[i] = orig;
    const double fd = ((double)tp.value(lp)[0] - (double)tm.value(lm)[0]) / (2.0 * h);
    const double an = g[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

constexpr double kTol = 2e-2;

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("conv2d gradients wrt input, weight, and bias at both strides") {
  Rng r(1);
  const Tensor x0 = randn(r, {2, 3, 6, 6});
  const Tensor w0 = randn(r, {4, 3, 3, 3}, 0.4f);
  const Tensor b0 = randn(r, {4}, 0.2f);
  const Tensor R1 = randn(r, {2, 4, 6, 6});
  const Tensor R2 = randn(r, {2, 4, 3, 3});

  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(conv2d(x, t.leaf(w0), t.leaf(b0), 1), t.leaf(R1)));
        }) < kTol);
  CHECK(fd_worst(w0, [&](Tape& t, Var w) {
          return mean_all(mul(conv2d(t.leaf(x0), w, t.leaf(b0), 1), t.leaf(R1)));
        }) < kTol);
  CHECK(fd_worst(b0, [&](Tape& t, Var b) {
          return mean_all(mul(conv2d(t.leaf(x0), t.leaf(w0), b, 1), t.leaf(R1)));
        }) < kTol);
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(conv2d(x, t.leaf(w0), t.leaf(b0), 2), t.leaf(R2)));
        }) < kTol);
  CHECK(fd_worst(w0, [&](Tape& t, Var w) {
          return mean_all(mul(conv2d(t.leaf(x0), w, t.leaf(b0), 2), t.leaf(R2)));
        }) < kTol);
}

TEST_CASE("transposed conv gradients") {
  Rng r(2);
  const Tensor x0 = randn(r, {2, 3, 4, 4});
  const Tensor w0 = randn(r, {2, 2, 5, 3}, 0.4f);
  const Tensor b0 = randn(r, {5}, 0.2f);
  const Tensor R = randn(r, {2, 5, 8, 8});

  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(tconv2d_x2(x, t.leaf(w0), t.leaf(b0)), t.leaf(R)));
        }) < kTol);
  CHECK(fd_worst(w0, [&](Tape& t, Var w) {
          return mean_all(mul(tconv2d_x2(t.leaf(x0), w, t.leaf(b0)), t.leaf(R)));
        }) < kTol);
  CHECK(fd_worst(b0, [&](Tape& t, Var b) {
          return mean_all(mul(tconv2d_x2(t.leaf(x0), t.leaf(w0), b), t.leaf(R)));
        }) < kTol);
}

TEST_CASE("bilinear upsample gradient") {
  Rng r(3);
  const Tensor x0 = randn(r, {2, 3, 5, 7});
  const Tensor R = randn(r, {2, 3, 10, 14});
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(bilinear_up2(x), t.leaf(R)));
        }) < kTol);
}

TEST_CASE("linear, layernorm, softmax, and bmm gradients") {
  Rng r(4);
  const Tensor x0 = randn(r, {5, 6});
  const Tensor w0 = randn(r, {4, 6}, 0.5f);
  const Tensor b0 = randn(r, {4}, 0.2f);
  const Tensor R = randn(r, {5, 4});
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(linear(x, t.leaf(w0), t.leaf(b0)), t.leaf(R)));
        }) < kTol);
  CHECK(fd_worst(w0, [&](Tape& t, Var w) {
          return mean_all(mul(linear(t.leaf(x0), w, t.leaf(b0)), t.leaf(R)));
        }) < kTol);

  const Tensor g0 = randn(r, {6}, 0.4f);
  const Tensor be0 = randn(r, {6}, 0.3f);
  const Tensor Rl = randn(r, {5, 6});
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(layernorm(x, t.leaf(g0), t.leaf(be0)), t.leaf(Rl)));
        }) < kTol);
  CHECK(fd_worst(g0, [&](Tape& t, Var g) {
          return mean_all(mul(layernorm(t.leaf(x0), g, t.leaf(be0)), t.leaf(Rl)));
        }) < kTol);
  CHECK(fd_worst(be0, [&](Tape& t, Var b) {
          return mean_all(mul(layernorm(t.leaf(x0), t.leaf(g0), b), t.leaf(Rl)));
        }) < kTol);
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(softmax_lastdim(x), t.leaf(Rl)));
        }) < kTol);

  const Tensor a0 = randn(r, {3, 4, 5});
  const Tensor bb0 = randn(r, {3, 5, 6});
  const Tensor Rb = randn(r, {3, 4, 6});
  CHECK(fd_worst(a0, [&](Tape& t, Var a) {
          return mean_all(mul(bmm(a, t.leaf(bb0), false), t.leaf(Rb)));
        }) < kTol);
  CHECK(fd_worst(bb0, [&](Tape& t, Var b) {
          return mean_all(mul(bmm(t.leaf(a0), b, false), t.leaf(Rb)));
        }) < kTol);
  const Tensor bt0 = randn(r, {3, 6, 5});
  CHECK(fd_worst(a0, [&](Tape& t, Var a) {
          return mean_all(mul(bmm(a, t.leaf(bt0), true), t.leaf(Rb)));
        }) < kTol);
  CHECK(fd_worst(bt0, [&](Tape& t, Var b) {
          return mean_all(mul(bmm(t.leaf(a0), b, true), t.leaf(Rb)));
        }) < kTol);
}

TEST_CASE("shape op gradients route every element to its source") {
  Rng r(5);
  const Tensor x0 = randn(r, {2, 3, 8});
  const Tensor Rh = randn(r, {4, 3, 4});
  CHECK(fd_worst(x0, [&](Tape& t, Var x) {
          return mean_all(mul(split_heads(x, 2), t.leaf(Rh)));
        }) < kTol);
  const Tensor y0 = randn(r, {4, 3, 4});
  const Tensor Rm = randn(r, {2, 3, 8});
  CHECK(fd_worst(y0, [&](Tape& t, Var x) {
          return mean_all(mul(merge_heads(x, 2), t.leaf(Rm)));
        }) < kTol);
  const Tensor z0 = randn(r, {2, 3, 4});
  const Tensor Rt = randn(r, {2, 4, 3});
  CHECK(fd_worst(z0, [&](Tape& t, Var x) {
          return mean_all(mul(transpose12(x), t.leaf(Rt)));
        }) < kTol);
  const Tensor c0 = randn(r, {2, 2, 3, 3});
  const Tensor c1 = randn(r, {2, 3, 3, 3});
  const Tensor Rc = randn(r, {2, 5, 3, 3});
  CHECK(fd_worst(c0, [&](Tape& t, Var a) {
          return mean_all(mul(concat_ch(a, t.leaf(c1)), t.leaf(Rc)));
        }) < kTol);
  CHECK(fd_worst(c1, [&](Tape& t, Var b) {
          return mean_all(mul(concat_ch(t.leaf(c0), b), t.leaf(Rc)));
        }) < kTol);
  const Tensor s0 = randn(r, {6, 4});
  const Tensor Rs = randn(r, {3, 4});
  CHECK(fd_worst(s0, [&](Tape& t, Var x) {
          return mean_all(mul(slice_dim0(x, 2, 5), t.leaf(Rs)));
        }) < kTol);
  const Tensor u0 = randn(r, {2, 6});
  const Tensor Ru = randn(r, {3, 4});
  CHECK(fd_worst(u0, [&](Tape& t, Var x) {
          return mean_all(mul(reshape(x, {3, 4}), t.leaf(Ru)));
        }) < kTol);
  const Tensor v0 = randn(r, {2, 5});
  const Tensor Rv = randn(r, {3, 2, 5});
  CHECK(fd_worst(v0, [&](Tape& t, Var x) {
          return mean_all(mul(tile0(x, 3), t.leaf(Rv)));
        }) < kTol);
}

TEST_CASE("pointwise op gradients") {
  Rng r(6);
  const Tensor q0 = randn(r, {3, 5});
  const Tensor Rq = randn(r, {3, 5});
  CHECK(fd_worst(q0, [&](Tape& t, Var x) {
          return mean_all(mul(sigmoid(x), t.leaf(Rq)));
        }) < kTol);
  CHECK(fd_worst(q0, [&](Tape& t, Var x) {
          return mean_all(mul(scale(x, -1.7f), t.leaf(Rq)));
        }) < kTol);
  CHECK(fd_worst(q0, [&](Tape& t, Var x) {
          return mean_all(mul(add_scalar(x, 0.3f), t.leaf(Rq)));
        }) < kTol);
  CHECK(fd_worst(q0, [&](Tape& t, Var x) {
          return mean_all(mul(sub(x, t.leaf(Rq)), t.leaf(Rq)));
        }) < kTol);
  CHECK(fd_worst(q0, [&](Tape& t, Var x) {
          return mean_all(mul(add(x, t.leaf(Rq)), t.leaf(Rq)));
        }) < kTol);
  // keep x away from the relu kink and the clamp edges so FD stays two-sided
  Tensor far = q0.clone();
  for (int64_t i = 0; i < far.numel(); ++i)
    if (std::abs(far[i]) < 0.05f) far[i] = 0.2f;
  CHECK(fd_worst(far, [&](Tape& t, Var x) {
          return mean_all(mul(relu(x), t.leaf(Rq)));
        }) < kTol);
  CHECK(fd_worst(far, [&](Tape& t, Var x) {
          return mean_all(mul(clamp(x, -0.8f, 0.8f), t.leaf(Rq)));
        }) < kTol);
  Tensor pos({3, 5});
  for (int64_t i = 0; i < pos.numel(); ++i) pos[i] = (float)(0.2 + r.uniform());
  CHECK(fd_worst(pos, [&](Tape& t, Var x) {
          return mean_all(mul(logv(x), t.leaf(Rq)));
        }) < kTol);
}

TEST_CASE("group composition gradient over probabilities") {
  Rng r(7);
  Tensor p0({2, 4, 6});
  for (int64_t i = 0; i < p0.numel(); ++i) p0[i] = (float)(0.15 + 0.7 * r.uniform());
  const Tensor Rn = randn(r, {2, 2, 6});
  const std::vector<std::vector<int>> groups{{0, 1}, {2, 3}};
  CHECK(fd_worst(p0, [&](Tape& t, Var p) {
          return mean_all(mul(noisy_or(p, groups), t.leaf(Rn)));
        }) < kTol);
}

TEST_CASE("mean_all spreads gradient uniformly as 1/n") {
  Tape t;
  Tensor x0({4, 5});
  for (int64_t i = 0; i < x0.numel(); ++i) x0[i] = (float)i;
  Var x = t.leaf(x0, true);
  t.backward(mean_all(x));
  const Tensor& g = t.grad(x);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("a value used twice accumulates both gradient paths") {
  // L = mean(x*x) + mean(x) gives dL/dx_i = (2*x_i + 1)/n
  Tape t;
  Tensor x0({6});
  for (int64_t i = 0; i < 6; ++i) x0[i] = 0.5f * (float)(i - 3);
  Var x = t.leaf(x0, true);
  Var loss = add(mean_all(mul(x, x)), mean_all(x));
  t.backward(loss);
  const Tensor& g = t.grad(x);
  for (int64_t i = 0; i < 6; ++i)
    CHECK(g[i] == doctest::Approx((2.0 * x0[i] + 1.0) / 6.0).epsilon(1e-5));
}

TEST_CASE("detach blocks gradient flow but keeps the value") {
  Tape t;
  Tensor x0({4});
  for (int64_t i = 0; i < 4; ++i) x0[i] = 0.3f * (float)(i + 1);
  Var x = t.leaf(x0, true);
  Var d = detach(x);
  for (int64_t i = 0; i < 4; ++i) CHECK(t.value(d)[i] == x0[i]);
  CHECK(!t.requires_grad(d));

  // x contributes through both factors, but only the live path produces grad
  Var loss = mean_all(mul(x, d));
  t.backward(loss);
  const Tensor& g = t.grad(x);
  for (int64_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(x0[i] / 4.0));
}

TEST_CASE("add_constant shifts values without creating a gradient path") {
  Tape t;
  Tensor x0({3});
  x0[0] = 1.0f;
  x0[1] = 2.0f;
  x0[2] = 3.0f;
  Tensor c({3});
  c[0] = 10.0f;
  c[1] = 20.0f;
  c[2] = 30.0f;
  Var x = t.leaf(x0, true);
  Var y = add_constant(x, c);
  for (int64_t i = 0; i < 3; ++i) CHECK(t.value(y)[i] == x0[i] + c[i]);
  t.backward(mean_all(y));
  const Tensor& g = t.grad(x);
  for (int64_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape t;
  Var x = t.leaf(Tensor({2, 2}), true);
  CHECK_THROWS_AS(t.backward(x), std::exception);
}

}  // TEST_SUITE
