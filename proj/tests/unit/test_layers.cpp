#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "salmod/layers.hpp"

using namespace salmod;
using namespace salmod::testing;

namespace {

// Direct sliding-window evaluation in the documented summation order.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t oh = (H + 2 * g.padding - KH) / g.stride + 1;
  const std::size_t ow = (W + 2 * g.padding - KW) / g.stride + 1;
  Tensor out({O, oh, ow}, 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        Real acc = b[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < KH; ++ky) {
            for (std::size_t kx = 0; kx < KW; ++kx) {
              const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.padding);
              const long ix = static_cast<long>(xx * g.stride + kx) - static_cast<long>(g.padding);
              Real v = 0;
              if (iy >= 0 && ix >= 0 && iy < static_cast<long>(H) && ix < static_cast<long>(W)) {
                v = x.at({c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
              acc += w.at({o, c, ky, kx}) * v;
            }
          }
        }
        out.at({o, y, xx}) = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches the sliding-window definition bit for bit") {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(6), K = 1 + rng.below(3);
    const ConvGeometry g{1 + rng.below(2), rng.below(3)};
    const std::size_t H = K + rng.below(5), W = K + rng.below(5);
    const Tensor x = random_tensor(rng, {C, H, W});
    const Tensor w = random_tensor(rng, {O, C, K, K});
    const Tensor b = random_tensor(rng, {O});
    Tape t;
    const Var y = conv2d(t.constant(x), t.constant(w), t.constant(b), g);
    CHECK(y.value() == naive_conv(x, w, b, g));
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Tape t;
  Var x = t.constant(Tensor({2, 4, 4}, 1.0));
  Var w = t.constant(Tensor({3, 1, 3, 3}, 1.0));
  Var b = t.constant(Tensor({3}, 0.0));
  CHECK_THROWS_AS(conv2d(x, w, b, {}), ShapeError);
}

TEST_CASE("conv_output_size") {
  CHECK(conv_output_size(64, 5, 2, 2) == 32);
  CHECK(conv_output_size(8, 3, 1, 1) == 8);
  CHECK_THROWS_AS(conv_output_size(2, 5, 1, 1), ShapeError);
}

TEST_CASE("maxpool2d picks window maxima and routes gradient to the first maximum") {
  Tape t;
  // Ties in the left window: both 5s, the first (row-major) wins.
  Tensor x({1, 2, 4}, std::vector<Real>{5, 1, 0, 2, 5, 3, 4, 1});
  Var in = t.leaf(x);
  Var y = maxpool2d(in, 2, 2);
  CHECK(y.value() == Tensor({1, 1, 2}, std::vector<Real>{5, 4}));
  t.backward(sum(y));
  CHECK(t.grad(in) == Tensor({1, 2, 4}, std::vector<Real>{1, 0, 0, 0, 0, 0, 1, 0}));
}

TEST_CASE("maxpool2d with a window larger than the input is an error") {
  Tape t;
  CHECK_THROWS_AS(maxpool2d(t.constant(Tensor({1, 1, 3}, 0.0)), 2, 2), ShapeError);
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
  Tape t;
  Var z = t.leaf(Tensor({3}, std::vector<Real>{1000, 0, -1000}));
  Var l = softmax_cross_entropy(z, 0);
  CHECK(l.value()[0] == doctest::Approx(0.0).epsilon(1e-12));
  Var l2 = softmax_cross_entropy(z, 1);
  CHECK(l2.value()[0] == doctest::Approx(1000.0));
  CHECK_THROWS_AS(softmax_cross_entropy(z, 3), std::out_of_range);
}

TEST_CASE("softmax cross-entropy of uniform logits is log(n)") {
  Tape t;
  Var l = softmax_cross_entropy(t.leaf(Tensor({4}, 0.3)), 2);
  CHECK(l.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("modulate forward") {
  Tape t;
  Tensor f({2, 1, 2}, std::vector<Real>{1, 2, 3, 4});
  Tensor m({1, 1, 2}, std::vector<Real>{0.5, 0.25});
  CHECK(modulate(t.constant(f), t.constant(m), false).value() ==
        Tensor({2, 1, 2}, std::vector<Real>{0.5, 0.5, 1.5, 1.0}));
  CHECK(modulate(t.constant(f), t.constant(m), true).value() ==
        Tensor({2, 1, 2}, std::vector<Real>{1.5, 2.5, 4.5, 5.0}));
  CHECK_THROWS_AS(modulate(t.constant(f), t.constant(Tensor({1, 2, 1}, 0.5)), true), ShapeError);
}

TEST_CASE("modulate backward scales upstream by (m + 1) with skip") {
  Rng rng(5);
  for (bool skip : {false, true}) {
    Tape t;
    const Tensor f = random_tensor(rng, {3, 4, 5});
    const Tensor m = random_tensor(rng, {1, 4, 5}, 0, 1);
    const Tensor r = random_tensor(rng, {3, 4, 5});
    Var fv = t.leaf(f);
    Var mv = t.leaf(m);
    t.backward(project(t, modulate(fv, mv, skip), r));
    const Tensor& g = t.grad(fv);
    const Tensor& gm = t.grad(mv);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < 20; ++j) {
        CHECK(g[c * 20 + j] == r[c * 20 + j] * (m[j] + (skip ? 1.0 : 0.0)));
      }
    }
    for (std::size_t j = 0; j < 20; ++j) {
      Real s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += r[c * 20 + j] * f[c * 20 + j];
      CHECK(gm[j] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("finite-difference checks of every layer op") {
  Rng rng(2024);
  const Real tol = 1e-4;
  SUBCASE("conv2d") {
    for (int i = 0; i < 5; ++i) {
      const std::size_t K = 1 + rng.below(3);
      const ConvGeometry g{1 + rng.below(2), rng.below(2)};
      const Tensor x = random_tensor(rng, {2, K + 2, K + 3});
      const Tensor w = random_tensor(rng, {3, 2, K, K});
      const Tensor b = random_tensor(rng, {3});
      const std::size_t oh = conv_output_size(K + 2, K, g.stride, g.padding);
      const std::size_t ow = conv_output_size(K + 3, K, g.stride, g.padding);
      const Tensor r = random_tensor(rng, {3, oh, ow});
      auto f = [&](Tape& t, const std::vector<Var>& v) { return project(t, conv2d(v[0], v[1], v[2], g), r); };
      CHECK(gradcheck(f, {x, w, b}) < tol);
    }
  }
  SUBCASE("fully_connected, relu, sigmoid") {
    for (int i = 0; i < 5; ++i) {
      const Tensor x = away_from_zero(rng, {2, 3});
      const Tensor w = random_tensor(rng, {4, 6});
      const Tensor b = random_tensor(rng, {4});
      const Tensor r = random_tensor(rng, {4});
      auto fc = [&](Tape& t, const std::vector<Var>& v) { return project(t, fully_connected(v[0], v[1], v[2]), r); };
      CHECK(gradcheck(fc, {x, w, b}) < tol);
      const Tensor rx = random_tensor(rng, {2, 3});
      auto rl = [&](Tape& t, const std::vector<Var>& v) { return project(t, relu(v[0]), rx); };
      CHECK(gradcheck(rl, {x}) < tol);
      auto sg = [&](Tape& t, const std::vector<Var>& v) { return project(t, sigmoid(v[0]), rx); };
      CHECK(gradcheck(sg, {random_tensor(rng, {2, 3}, -3, 3)}) < tol);
    }
  }
}

TEST_CASE("identity kernel and box sum") {
  Tape t;
  const Tensor x({1, 3, 3}, std::vector<Real>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Var id = conv2d(t.constant(x), t.constant(Tensor({1, 1, 1, 1}, 1.0)), t.constant(Tensor({1}, 0.0)), {});
  CHECK(id.value() == x);
  Var box = conv2d(t.constant(x), t.constant(Tensor({1, 1, 3, 3}, 1.0)), t.constant(Tensor({1}, 0.0)), {});
  CHECK(box.value() == Tensor({1, 1, 1}, 45.0));
}

TEST_CASE("maxpool small cases and naive oracle") {
  Tape t;
  CHECK(maxpool2d(t.constant(Tensor({1, 2, 2}, std::vector<Real>{1, 2, 3, 4})), 2, 2).value()[0] == 4.0);
  Var c = t.leaf(Tensor({1, 2, 2}, 7.0));
  Var y = maxpool2d(c, 2, 2);
  CHECK(y.value()[0] == 7.0);
  t.backward(sum(y));
  CHECK(t.grad(c) == Tensor({1, 2, 2}, std::vector<Real>{1, 0, 0, 0}));

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t C = 1 + rng.below(3), H = 2 + rng.below(6), W = 2 + rng.below(6);
    const std::size_t win = 2, stride = 1 + rng.below(2);
    const Tensor x = random_tensor(rng, {C, H, W});
    Tape u;
    const Tensor out = maxpool2d(u.constant(x), win, stride).value();
    const std::size_t oh = (H - win) / stride + 1, ow = (W - win) / stride + 1;
    REQUIRE(out.shape() == Shape{C, oh, ow});
    for (std::size_t ch = 0; ch < C; ++ch) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          Real best = -1e300;
          for (std::size_t a = 0; a < win; ++a) {
            for (std::size_t b = 0; b < win; ++b) best = std::max(best, x.at({ch, i * stride + a, j * stride + b}));
          }
          CHECK(out.at({ch, i, j}) == best);
        }
      }
    }
  }
}

TEST_CASE("sigmoid and relu values and slopes") {
  Tape t;
  CHECK(sigmoid(t.constant(Tensor({1}, 0.0))).value()[0] == 0.5);
  Var x = t.leaf(Tensor({2}, std::vector<Real>{-3, 2}));
  Var y = relu(x);
  CHECK(y.value() == Tensor({2}, std::vector<Real>{0, 2}));
  t.backward(sum(y));
  CHECK(t.grad(x) == Tensor({2}, std::vector<Real>{0, 1}));
}

TEST_CASE("modulate with skip at zero and constant inputs") {
  Rng rng(12);
  Tape t;
  const Tensor f = random_tensor(rng, {3, 4, 4});
  CHECK(modulate(t.constant(f), t.constant(Tensor({1, 4, 4}, 0.0)), true).value() == f);
  CHECK(modulate(t.constant(Tensor({2, 3, 3}, 2.0)), t.constant(Tensor({1, 3, 3}, 0.5)), true).value() ==
        Tensor({2, 3, 3}, 3.0));
}

TEST_CASE("finite differences through a random composed graph") {
  Rng rng(77);
  for (int i = 0; i < 5; ++i) {
    const Tensor img = random_tensor(rng, {2, 6, 6});
    const Tensor w1 = random_tensor(rng, {3, 2, 3, 3});
    const Tensor b1 = random_tensor(rng, {3}, 0.05, 0.2);
    const Tensor ws = random_tensor(rng, {1, 3, 1, 1});
    const Tensor wf = random_tensor(rng, {4, 27});
    const Tensor bf = random_tensor(rng, {4});
    const std::size_t label = rng.below(4);
    auto f = [&](Tape& t, const std::vector<Var>& v) {
      Var h = relu(conv2d(v[0], v[1], v[2], {1, 1}));
      Var m = sigmoid(conv2d(h, v[3], t.constant(Tensor({1}, 0.0)), {}));
      Var p = maxpool2d(modulate(h, m, true), 2, 2);
      Var z = fully_connected(p, v[4], v[5]);
      return add(softmax_cross_entropy(z, label), scale(sum(mul(z, z)), 0.01));
    };
    CHECK(gradcheck(f, {img, w1, b1, ws, wf, bf}) < 1e-4);
  }
}
