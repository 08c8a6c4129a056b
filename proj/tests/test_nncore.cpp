#include <doctest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "nncore.hpp"
#include "support/gradient_suite.hpp"
#include "support/oracles.hpp"

using namespace ocutrack;
using namespace ocutrack::nn;

namespace {

// Direct summation cross-correlation in double. `scale` receives the sum of
// absolute terms per output, the natural yardstick for rounding error.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, std::vector<double>& scale) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), K = w.dim(0);
  Tensor y({K, H - 2, W - 2});
  scale.clear();
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < H - 2; ++i)
      for (int j = 0; j < W - 2; ++j) {
        double s = b[k], a = std::abs(b[k]);
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const double t = double(w[((static_cast<std::size_t>(k) * C + c) * 3 + u) * 3 + v]) * x.at(c, i + u, j + v);
              s += t;
              a += std::abs(t);
            }
        y.at(k, i, j) = static_cast<float>(s);
        scale.push_back(a);
      }
  return y;
}

}  // namespace

TEST_CASE("tensor construction") {
  Tensor t({2, 3, 4}, 1.5f);
  CHECK(t.size() == 24);
  CHECK(t.at(1, 2, 3) == 1.5f);
  CHECK(shape_volume({2, 3, 4}) == 24);
  CHECK_THROWS_AS(Tensor({2, 0}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), Error);
}

TEST_CASE("param set keeps insertion order and rejects duplicates") {
  ParamSet ps;
  ps.add("b", {2});
  ps.add("a", {3, 3});
  CHECK(ps.names() == std::vector<std::string>{"b", "a"});
  CHECK(ps.scalar_count() == 11);
  CHECK(ps.get("a").grad.shape() == std::vector<int>{3, 3});
  CHECK(ps.get("a").momentum.shape() == std::vector<int>{3, 3});
  CHECK_THROWS_AS(ps.add("a", {1}), Error);
  CHECK_THROWS_AS(ps.get("zz"), Error);
}

TEST_CASE("conv2d_valid examples") {
  const Tensor ones({1, 3, 3}, 1.0f);
  const Tensor y = conv2d_valid(ones, Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}, 0.0f));
  CHECK(y.shape() == std::vector<int>{1, 1, 1});
  CHECK(y[0] == 9.0f);

  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({1, 6, 5}, rng);
  Tensor id({1, 1, 3, 3}, 0.0f);
  id[4] = 1.0f;
  const Tensor c = conv2d_valid(x, id, Tensor({1}, 0.0f));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) CHECK(c.at(0, i, j) == x.at(0, i + 1, j + 1));
}

TEST_CASE("conv2d_valid matches direct summation") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = oracle::random_tensor({2, 8, 8}, rng);
    const Tensor w = oracle::random_tensor({4, 2, 3, 3}, rng);
    const Tensor b = oracle::random_tensor({4}, rng);
    std::vector<double> scale;
    const Tensor want = conv_oracle(x, w, b, scale);
    const Tensor got = conv2d_valid(x, w, b);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(double(got[i]) - want[i]) <= 1e-5 * scale[i]);
  }
}

TEST_CASE("conv2d_valid is linear without bias") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = oracle::random_tensor({2, 7, 6}, rng), z = oracle::random_tensor({2, 7, 6}, rng);
    const Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    const Tensor zero({3}, 0.0f);
    const float a = 0.7f, b = -1.3f;
    Tensor mix({2, 7, 6});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * z[i];
    const Tensor lhs = conv2d_valid(mix, w, zero);
    const Tensor cx = conv2d_valid(x, w, zero), cz = conv2d_valid(z, w, zero);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double rhs = a * double(cx[i]) + b * double(cz[i]);
      REQUIRE(std::abs(lhs[i] - rhs) <= 1e-5 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("conv2d_valid backward simple cases") {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({2, 3, 3}, rng);
  const Tensor w = oracle::random_tensor({1, 2, 3, 3}, rng);
  Conv3x3Cache cache;
  conv2d_valid(x, w, Tensor({1}, 0.0f), &cache);

  const ConvGrads zero = conv2d_valid_backward(cache, Tensor({1, 1, 1}, 0.0f));
  for (float v : zero.input.values()) CHECK(v == 0.0f);
  for (float v : zero.weights.values()) CHECK(v == 0.0f);
  CHECK(zero.bias[0] == 0.0f);

  const ConvGrads one = conv2d_valid_backward(cache, Tensor({1, 1, 1}, 1.0f));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(one.weights[i] == x[i]);
  CHECK(one.bias[0] == 1.0f);
}

TEST_CASE("conv shape errors") {
  CHECK_THROWS_AS(conv2d_valid(Tensor({1, 2, 5}), Tensor({1, 1, 3, 3}), Tensor({1})), Error);
  CHECK_THROWS_AS(conv2d_valid(Tensor({2, 5, 5}), Tensor({1, 1, 3, 3}), Tensor({1})), Error);
}

TEST_CASE("relu examples") {
  const Tensor x({3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  ReluCache cache;
  const Tensor y = relu(x, &cache);
  CHECK(y.values() == std::vector<float>{0.0f, 0.0f, 2.0f});
  const Tensor g = relu_backward(cache, Tensor({3}, 1.0f));
  CHECK(g.values() == std::vector<float>{0.0f, 0.0f, 1.0f});
}

TEST_CASE("sigmoid examples") {
  const Tensor y = sigmoid(Tensor({2}, std::vector<float>{0.0f, 100.0f}));
  CHECK(y[0] == 0.5f);
  CHECK(y[1] == 1.0f);
  CHECK(std::isfinite(sigmoid(Tensor({1}, -100.0f))[0]));
}

TEST_CASE("sigmoid gradient at 1e-4 relative") {
  std::mt19937_64 rng(44);
  oracle::GradCheck acc;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = oracle::random_tensor({1, 3, 3}, rng, -3.0f, 3.0f);
    SigmoidCache cache;
    sigmoid(x, &cache);
    const Tensor w = oracle::random_tensor({1, 3, 3}, rng);
    const Tensor g = sigmoid_backward(cache, w);
    auto f = [&] {
      const ref::DT y = ref::sigmoid(ref::from(x));
      double s = 0.0;
      for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * w[i];
      return oracle::Evaluation{s, {}};
    };
    oracle::check_gradient(acc, x.values(), g.values(), f, 1e-3, 1e-4);
  }
  INFO("worst relative error " << acc.worst_rel);
  CHECK(acc.failures == 0);
}

TEST_CASE("maxpool2 examples") {
  const Tensor x({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  MaxPoolCache cache;
  const Tensor y = maxpool2(x, &cache);
  CHECK(y.shape() == std::vector<int>{1, 1, 1});
  CHECK(y[0] == 4.0f);
  CHECK(maxpool2_backward(cache, Tensor({1, 1, 1}, 1.0f)).values() == std::vector<float>{0, 0, 0, 1});

  MaxPoolCache cc;
  maxpool2(Tensor({1, 4, 4}, 0.5f), &cc);
  const Tensor g = maxpool2_backward(cc, Tensor({1, 2, 2}, 1.0f));
  for (int y0 = 0; y0 < 4; ++y0)
    for (int x0 = 0; x0 < 4; ++x0) CHECK(g.at(0, y0, x0) == ((y0 % 2 == 0 && x0 % 2 == 0) ? 1.0f : 0.0f));

  CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 4})), Error);
}

TEST_CASE("maxpool2 matches a window-max oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = oracle::random_tensor({3, 8, 8}, rng);
    const Tensor y = maxpool2(x);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          const float m = std::max({x.at(c, 2 * i, 2 * j), x.at(c, 2 * i, 2 * j + 1), x.at(c, 2 * i + 1, 2 * j),
                                    x.at(c, 2 * i + 1, 2 * j + 1)});
          REQUIRE(y.at(c, i, j) == m);
        }
  }
}

TEST_CASE("upconv2 examples") {
  const Tensor y = upconv2(Tensor({1, 1, 1}, 0.75f), Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}, 0.0f));
  CHECK(y.shape() == std::vector<int>{1, 2, 2});
  for (float v : y.values()) CHECK(v == 0.75f);

  const Tensor z = upconv2(Tensor({2, 3, 2}, 0.0f), Tensor({2, 2, 2, 2}, 1.0f),
                           Tensor({2}, std::vector<float>{0.25f, -1.0f}));
  CHECK(z.shape() == std::vector<int>{2, 6, 4});
  for (int i = 0; i < 24; ++i) CHECK(z[i] == 0.25f);
  for (int i = 24; i < 48; ++i) CHECK(z[i] == -1.0f);
}

TEST_CASE("concat_crop examples") {
  Tensor skip({1, 4, 4});
  for (int i = 0; i < 16; ++i) skip[i] = static_cast<float>(i);
  const Tensor up({1, 2, 2}, -1.0f);
  const Tensor y = concat_crop(skip, up);
  CHECK(y.shape() == std::vector<int>{2, 2, 2});
  CHECK(y.at(0, 0, 0) == 5.0f);
  CHECK(y.at(0, 0, 1) == 6.0f);
  CHECK(y.at(0, 1, 0) == 9.0f);
  CHECK(y.at(0, 1, 1) == 10.0f);
  CHECK(y.at(1, 1, 1) == -1.0f);

  std::mt19937_64 rng(6);
  const Tensor s = oracle::random_tensor({2, 3, 3}, rng);
  const Tensor same = concat_crop(s, Tensor({1, 3, 3}));
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(same[i] == s[i]);

  CHECK_THROWS_AS(concat_crop(Tensor({1, 5, 4}), Tensor({1, 2, 2})), Error);
  CHECK_THROWS_AS(concat_crop(Tensor({1, 2, 2}), Tensor({1, 4, 4})), Error);
}

TEST_CASE("bce loss examples") {
  Tensor t({1, 2, 2}, std::vector<float>{0, 1, 1, 0});
  Tensor p({1, 2, 2}, std::vector<float>{kProbClamp, 1 - kProbClamp, 1 - kProbClamp, kProbClamp});
  CHECK(bce_loss(p, t).loss == doctest::Approx(0.0).epsilon(1e-6));
  // 0.5 everywhere gives ln 2 independent of the target
  CHECK(bce_loss(Tensor({1, 2, 2}, 0.5f), t).loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(bce_loss(Tensor({1, 2, 2}, 0.5f), Tensor({1, 2, 2}, 1.0f)).loss == doctest::Approx(std::log(2.0)));
  CHECK(bce_with_logits(Tensor({1, 2, 2}, 0.0f), t).loss == doctest::Approx(std::log(2.0)));
  // saturated logits stay finite
  const LossResult sat = bce_with_logits(Tensor({2}, std::vector<float>{200.0f, -200.0f}), Tensor({2}, 0.0f));
  CHECK(std::isfinite(sat.loss));
  CHECK(sat.loss == doctest::Approx(100.0));
}

TEST_CASE("bce_with_logits equals bce of sigmoid") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = oracle::random_tensor({1, 4, 4}, rng, -6.0f, 6.0f);
    Tensor t({1, 4, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (rng() & 1) ? 1.0f : 0.0f;
    CHECK(bce_with_logits(z, t).loss == doctest::Approx(bce_loss(sigmoid(z), t).loss).epsilon(1e-5));
  }
}

TEST_CASE("sgd step") {
  ParamSet ps;
  Param& p = ps.add("w", {1});
  p.grad[0] = 1.0f;
  sgd_step(ps, 0.1f, 0.0f);
  CHECK(p.value[0] == doctest::Approx(-0.1));
  CHECK(p.grad[0] == 0.0f);

  sgd_step(ps, 0.1f, 0.0f);  // zero grads: unchanged
  CHECK(p.value[0] == doctest::Approx(-0.1));

  // two momentum steps unrolled by hand: m1 = g1, w1 = -lr g1; m2 = mu g1 + g2, w2 = w1 - lr m2
  ParamSet q;
  Param& r = q.add("w", {1});
  r.value[0] = 2.0f;
  r.grad[0] = 0.5f;
  sgd_step(q, 0.1f, 0.9f);
  r.grad[0] = -0.25f;
  sgd_step(q, 0.1f, 0.9f);
  const double m2 = 0.9 * 0.5 + -0.25;
  const double w2 = 2.0 - 0.1 * 0.5 - 0.1 * m2;
  CHECK(r.value[0] == doctest::Approx(w2).epsilon(1e-6));
  CHECK(r.momentum[0] == doctest::Approx(m2).epsilon(1e-6));
}

TEST_CASE("shape algebra composes") {
  std::mt19937_64 rng(9);
  for (int h : {8, 10, 12, 20}) {
    const Tensor x = oracle::random_tensor({2, h, h + 2}, rng);
    const Tensor c = conv2d_valid(x, oracle::random_tensor({3, 2, 3, 3}, rng), Tensor({3}));
    CHECK(c.shape() == std::vector<int>{3, h - 2, h});
    const Tensor p = maxpool2(c);
    CHECK(p.shape() == std::vector<int>{3, (h - 2) / 2, h / 2});
    const Tensor u = upconv2(p, oracle::random_tensor({1, 3, 2, 2}, rng), Tensor({1}));
    CHECK(u.shape() == std::vector<int>{1, h - 2, h});
  }
}

TEST_CASE("layers are deterministic") {
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor({3, 9, 9}, rng);
  const Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng), b = oracle::random_tensor({4}, rng);
  CHECK(conv2d_valid(x, w, b) == conv2d_valid(x, w, b));
}

TEST_CASE("finite difference suite on every layer") {
  for (const auto& r : oracle::run_layer_gradient_suite(20)) {
    INFO(r.op << ": " << r.check.failures << " of " << r.check.checked << " entries, worst " << r.check.worst_rel
              << ", forward " << r.worst_forward_rel);
    CHECK(r.pass());
  }
}

TEST_CASE("finite difference check of a whole depth-1 U-Net") {
  const auto r = oracle::run_unet_gradient_check(20);
  INFO(r.check.failures << " of " << r.check.checked << " entries, worst " << r.check.worst_rel << ", skipped "
                       << r.check.skipped);
  CHECK(r.pass());
  // kink crossings are rare enough that nearly every parameter is exercised
  CHECK(r.check.skipped * 20 < r.check.checked);
}
