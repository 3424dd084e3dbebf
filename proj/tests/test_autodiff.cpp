#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "celiac/autodiff.hpp"
#include "celiac/nn.hpp"
#include "celiac/optim.hpp"
#include "testutil.hpp"

using namespace celiac;
using testutil::random_tensor;

namespace {

// Four-nested-loop direct cross-correlation, the independent conv oracle.
Tensor conv2d_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int stride,
                     int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor out({N, F, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = b[f];
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int ih = oh * stride - pad + i;
                const int iw = ow * stride - pad + j;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at4(n, c, ih, iw) * k.at4(f, c, i, j);
              }
          out.at4(n, f, oh, ow) = acc;
        }
  return out;
}

Tensor dense_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int N = x.dim(0), D = x.dim(1), M = w.dim(1);
  Tensor out({N, M});
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      double acc = b[m];
      for (int d = 0; d < D; ++d) acc += x.at2(n, d) * w.at2(d, m);
      out.at2(n, m) = acc;
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 against all-ones kernel sums to 9") {
  Tape t;
  Var x = t.input(Tensor::full({1, 1, 3, 3}, 1.0));
  Var k = t.input(Tensor::full({1, 1, 3, 3}, 1.0));
  Var b = t.input(Tensor({1}));
  Var y = t.conv2d(x, k, b, 1, 0);
  CHECK(t.value(y).shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(t.value(y)[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
  Rng rng(3);
  Tape t;
  Tensor xin = random_tensor({2, 1, 4, 5}, rng);
  Var x = t.input(xin);
  Var k = t.input(Tensor::full({1, 1, 1, 1}, 1.0));
  Var b = t.input(Tensor({1}));
  Var y = t.conv2d(x, k, b, 1, 0);
  CHECK(max_abs_diff(t.value(y), xin) == 0.0);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 4; ++trial) {
    Tensor x = random_tensor({1, 2, 5, 5}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const int stride = 1 + trial % 2;
    const int pad = trial / 2;
    Tape t;
    Var y = t.conv2d(t.input(x), t.input(k), t.input(b), stride, pad);
    CHECK(max_abs_diff(t.value(y), conv2d_oracle(x, k, b, stride, pad)) < 1e-12);
  }
}

TEST_CASE("conv2d rejects bad arguments") {
  Tape t;
  Var x = t.input(Tensor({1, 2, 4, 4}));
  Var k3 = t.input(Tensor({1, 3, 3, 3}));  // channel mismatch
  Var b = t.input(Tensor({1}));
  CHECK_THROWS_AS(t.conv2d(x, k3, b, 1, 0), std::invalid_argument);
  Var k = t.input(Tensor({1, 2, 3, 3}));
  CHECK_THROWS_AS(t.conv2d(x, k, b, 0, 0), std::invalid_argument);
  Var kbig = t.input(Tensor({1, 2, 7, 7}));
  CHECK_THROWS_AS(t.conv2d(x, kbig, b, 1, 1), std::invalid_argument);
}

TEST_CASE("dense: identity weight and zero-weight cases") {
  Rng rng(5);
  Tensor xin = random_tensor({3, 4}, rng);
  Tape t;
  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye.at2(i, i) = 1.0;
  Var y = t.dense(t.input(xin), t.input(eye), t.input(Tensor({4})));
  CHECK(max_abs_diff(t.value(y), xin) == 0.0);

  Tensor bias = Tensor::from({1.5, -2.0, 0.25});
  Var z = t.dense(t.input(xin), t.input(Tensor({4, 3})), t.input(bias));
  for (int n = 0; n < 3; ++n)
    for (int m = 0; m < 3; ++m) CHECK(t.value(z).at2(n, m) == bias[m]);
}

TEST_CASE("dense matches the dot-product oracle") {
  Rng rng(23);
  Tensor x = random_tensor({2, 3}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tape t;
  Var y = t.dense(t.input(x), t.input(w), t.input(b));
  CHECK(max_abs_diff(t.value(y), dense_oracle(x, w, b)) < 1e-12);
  CHECK_THROWS_AS(t.dense(t.input(x), t.input(Tensor({5, 4})), t.input(b)),
                  std::invalid_argument);
}

TEST_CASE("batchnorm: zero-mean unit-variance channel passes through up to eps") {
  // channel data {-1,+1,...} has exact mean 0 and population variance 1
  Tensor x({1, 1, 2, 2}, {-1.0, 1.0, -1.0, 1.0});
  BatchNormState st = BatchNormState::create(1);
  Tape t;
  Var y = t.batchnorm(t.input(x), t.input(Tensor::full({1}, 1.0)),
                      t.input(Tensor({1})), st, Mode::kTrain);
  const double factor = 1.0 / std::sqrt(1.0 + st.eps);
  for (std::int64_t i = 0; i < 4; ++i)
    CHECK(t.value(y)[i] == doctest::Approx(x[i] * factor).epsilon(1e-12));
}

TEST_CASE("batchnorm: constant channel collapses to beta") {
  Tensor x = Tensor::full({2, 1, 2, 2}, 7.25);
  BatchNormState st = BatchNormState::create(1);
  Tape t;
  Var y = t.batchnorm(t.input(x), t.input(Tensor::full({1}, 1.0)),
                      t.input(Tensor::from({0.75})), st, Mode::kTrain);
  for (std::int64_t i = 0; i < t.value(y).size(); ++i)
    CHECK(t.value(y)[i] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("batchnorm running stats update with momentum 0.1") {
  Tensor x = Tensor::full({1, 1, 2, 2}, 2.0);  // batch mean 2.0
  BatchNormState st = BatchNormState::create(1);
  Tape t;
  t.batchnorm(t.input(x), t.input(Tensor::full({1}, 1.0)), t.input(Tensor({1})), st,
              Mode::kTrain);
  CHECK(st.running_mean[0] == doctest::Approx(0.2).epsilon(1e-12));  // 0.9*0 + 0.1*2
  CHECK(st.initialized);
}

TEST_CASE("batchnorm eval requires initialized running stats") {
  BatchNormState st = BatchNormState::create(1);
  Tape t;
  Var x = t.input(Tensor::full({1, 1, 2, 2}, 1.0));
  Var g = t.input(Tensor::full({1}, 1.0));
  Var b = t.input(Tensor({1}));
  CHECK_THROWS(t.batchnorm(x, g, b, st, Mode::kEval));
  st.initialized = true;  // explicit initialization is allowed
  CHECK_NOTHROW(t.batchnorm(x, g, b, st, Mode::kEval));
}

TEST_CASE("relu, maxpool2x2 and global_avg_pool basics") {
  Tape t;
  Var r = t.relu(t.input(Tensor::from({-1.0, 0.0, 2.0})));
  CHECK(t.value(r)[0] == 0.0);
  CHECK(t.value(r)[1] == 0.0);
  CHECK(t.value(r)[2] == 2.0);

  Var m = t.maxpool2x2(t.input(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})));
  CHECK(t.value(m).size() == 1);
  CHECK(t.value(m)[0] == 4.0);
  CHECK_THROWS_AS(t.maxpool2x2(t.input(Tensor({1, 1, 3, 2}))), std::invalid_argument);

  Var g = t.global_avg_pool(t.input(Tensor::full({1, 2, 3, 3}, 5.0)));
  CHECK(t.value(g).shape() == std::vector<int>{1, 2});
  CHECK(t.value(g)[0] == doctest::Approx(5.0));
}

TEST_CASE("dropout: identity cases and the Monte Carlo expectation") {
  Rng rng(99);
  Tensor ones = Tensor::full({100000}, 1.0);
  Tape t;
  Var a = t.dropout(t.input(ones), 0.0, Mode::kTrain, rng);
  CHECK(max_abs_diff(t.value(a), ones) == 0.0);
  Var b = t.dropout(t.input(ones), 0.5, Mode::kEval, rng);
  CHECK(max_abs_diff(t.value(b), ones) == 0.0);

  Var c = t.dropout(t.input(ones), 0.5, Mode::kTrain, rng);
  double mean = 0.0;
  for (std::int64_t i = 0; i < t.value(c).size(); ++i) mean += t.value(c)[i];
  mean /= static_cast<double>(t.value(c).size());
  CHECK(mean > 0.98);
  CHECK(mean < 1.02);

  CHECK_THROWS_AS(t.dropout(a, 1.0, Mode::kTrain, rng), std::invalid_argument);
  CHECK_THROWS_AS(t.dropout(a, -0.1, Mode::kTrain, rng), std::invalid_argument);
}

TEST_CASE("dropout masks are reproducible from the seed") {
  auto run = [] {
    Rng base(123);
    Rng rng = base.stream("dropout");
    Tape t;
    Var d = t.dropout(t.input(Tensor::full({64}, 1.0)), 0.5, Mode::kTrain, rng);
    return t.value(d);
  };
  CHECK(max_abs_diff(run(), run()) == 0.0);
}

TEST_CASE("softmax cross entropy: uniform logits give ln C") {
  Tape t;
  Var loss = t.softmax_cross_entropy(t.input(Tensor({2, 4})), {0, 3});
  CHECK(t.value(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy: confident correct logit gives ~0 loss") {
  Tensor z({1, 4});
  z.at2(0, 2) = 1000.0;
  Tape t;
  Var loss = t.softmax_cross_entropy(t.input(z), {2});
  CHECK(t.value(loss)[0] < 1e-9);
  CHECK(std::isfinite(t.value(loss)[0]));
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  Tape t;
  Var z = t.input(Tensor({1, 4}));
  CHECK_THROWS_AS(t.softmax_cross_entropy(z, {4}), std::invalid_argument);
  CHECK_THROWS_AS(t.softmax_cross_entropy(z, {-1}), std::invalid_argument);
}

TEST_CASE("softmax cross entropy gradient equals softmax minus one-hot") {
  Rng rng(31);
  Tensor z = random_tensor({3, 4}, rng, -2, 2);
  const std::vector<int> labels = {1, 0, 3};

  Tape t;
  Var zv = t.param("z", z);
  Var loss = t.softmax_cross_entropy(zv, labels);
  t.backward(loss);
  Tensor analytic = t.grad(zv);

  // finite differences, relative error < 1e-6
  std::vector<Tensor*> params = {&z};
  auto fwd = [&](const std::vector<Tensor*>& ps) {
    Tape t2;
    Var l = t2.softmax_cross_entropy(t2.input(*ps[0]), labels);
    return t2.value(l)[0];
  };
  CHECK(finite_difference_check(fwd, params, {analytic}, 1e-6) < 1e-6);

  // also the closed form
  Tensor probs = softmax_rows(z);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      const double expect =
          (probs.at2(i, j) - (labels[static_cast<std::size_t>(i)] == j ? 1 : 0)) / 3.0;
      CHECK(analytic.at2(i, j) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("backward: loss = sum(x^2) gives exactly 2x") {
  Rng rng(8);
  Tensor x = random_tensor({7}, rng);
  Tape t;
  Var xv = t.param("x", x);
  Var loss = t.sum(t.mul(xv, xv));
  t.backward(loss);
  for (int i = 0; i < 7; ++i) CHECK(t.grad(xv)[i] == 2.0 * x[i]);
}

TEST_CASE("backward: unused parameter gets an all-zero gradient") {
  Tape t;
  Var used = t.param("used", Tensor::from({1.0, 2.0}));
  Var unused = t.param("unused", Tensor::from({3.0, 4.0}));
  Var loss = t.sum(used);
  t.backward(loss);
  CHECK(t.grad(unused)[0] == 0.0);
  CHECK(t.grad(unused)[1] == 0.0);
}

TEST_CASE("backward requires a scalar root") {
  Tape t;
  Var x = t.input(Tensor::from({1.0, 2.0}));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("backward twice without re-running forward is identical") {
  Rng rng(12);
  Tensor x = random_tensor({4}, rng);
  Tape t;
  Var xv = t.param("x", x);
  Var loss = t.sum(t.mul(xv, xv));
  t.backward(loss);
  Tensor first = t.grad(xv);
  t.backward(loss);
  CHECK(max_abs_diff(first, t.grad(xv)) == 0.0);
}

TEST_CASE("gradients accumulate additively at fan-out") {
  Tensor x = Tensor::from({3.0});
  Tape t;
  Var xv = t.param("x", x);
  Var y = t.add(xv, xv);  // y = 2x
  t.backward(t.sum(y));
  CHECK(t.grad(xv)[0] == 2.0);
}

// Full mini-network: conv -> batchnorm -> relu -> maxpool -> dense -> CE.
TEST_CASE("mini-network end-to-end finite-difference gradient check") {
  Rng rng(2024);
  Rng init = rng.stream("init");
  Tensor conv_w = he_normal({3, 2, 3, 3}, 2 * 9, init);
  Tensor conv_b = random_tensor({3}, init, -0.1, 0.1);
  Tensor gamma = random_tensor({3}, init, 0.5, 1.5);
  Tensor beta = random_tensor({3}, init, -0.5, 0.5);
  Tensor dense_w = he_normal({27, 4}, 27, init);
  Tensor dense_b = random_tensor({4}, init, -0.1, 0.1);
  Rng data = rng.stream("data");
  Tensor x = random_tensor({2, 2, 6, 6}, data);
  const std::vector<int> labels = {1, 3};

  std::vector<Tensor*> params = {&conv_w, &conv_b, &gamma, &beta, &dense_w, &dense_b};
  auto fwd = [&](const std::vector<Tensor*>& ps) {
    BatchNormState st = BatchNormState::create(3);
    Tape t;
    Var h = t.conv2d(t.input(x), t.input(*ps[0]), t.input(*ps[1]), 1, 1);
    h = t.batchnorm(h, t.input(*ps[2]), t.input(*ps[3]), st, Mode::kTrain);
    h = t.relu(h);
    h = t.maxpool2x2(h);
    h = t.reshape(h, {2, 27});
    h = t.dense(h, t.input(*ps[4]), t.input(*ps[5]));
    return t.value(t.softmax_cross_entropy(h, labels))[0];
  };

  // analytic gradients from one taped pass
  BatchNormState st = BatchNormState::create(3);
  Tape t;
  Var cw = t.param("conv.w", conv_w);
  Var cb = t.param("conv.b", conv_b);
  Var gm = t.param("bn.gamma", gamma);
  Var bt = t.param("bn.beta", beta);
  Var dw = t.param("dense.w", dense_w);
  Var db = t.param("dense.b", dense_b);
  Var h = t.conv2d(t.input(x), cw, cb, 1, 1);
  h = t.batchnorm(h, gm, bt, st, Mode::kTrain);
  h = t.relu(h);
  h = t.maxpool2x2(h);
  h = t.reshape(h, {2, 27});
  h = t.dense(h, dw, db);
  t.backward(t.softmax_cross_entropy(h, labels));

  std::vector<Tensor> grads = {t.grad(cw), t.grad(cb), t.grad(gm),
                               t.grad(bt), t.grad(dw), t.grad(db)};
  CHECK(finite_difference_check(fwd, params, grads) < 1e-4);
}

TEST_CASE("per-op finite-difference checks on random tensors") {
  Rng master(555);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng = master.stream(seed);

    SUBCASE("") {}  // keep doctest quiet about empty bodies

    {  // conv2d wrt all inputs
      Tensor x = random_tensor({2, 2, 4, 4}, rng);
      Tensor k = random_tensor({2, 2, 3, 3}, rng);
      Tensor b = random_tensor({2}, rng);
      Tensor w = random_tensor({2, 2, 4, 4}, rng);  // loss weights
      std::vector<Tensor*> ps = {&x, &k, &b};
      auto fwd = [&](const std::vector<Tensor*>& p) {
        Tape t;
        Var y = t.conv2d(t.input(*p[0]), t.input(*p[1]), t.input(*p[2]), 1, 1);
        return t.value(t.sum(t.mul(y, t.input(w))))[0];
      };
      Tape t;
      Var xv = t.param("x", x), kv = t.param("k", k), bv = t.param("b", b);
      Var y = t.conv2d(xv, kv, bv, 1, 1);
      t.backward(t.sum(t.mul(y, t.input(w))));
      CHECK(finite_difference_check(fwd, ps, {t.grad(xv), t.grad(kv), t.grad(bv)}) < 1e-4);
    }

    {  // batchnorm train mode wrt input and affine params
      Tensor x = random_tensor({2, 2, 3, 3}, rng);
      Tensor g = random_tensor({2}, rng, 0.5, 1.5);
      Tensor be = random_tensor({2}, rng, -0.5, 0.5);
      Tensor w = random_tensor({2, 2, 3, 3}, rng);
      std::vector<Tensor*> ps = {&x, &g, &be};
      auto fwd = [&](const std::vector<Tensor*>& p) {
        BatchNormState st = BatchNormState::create(2);
        Tape t;
        Var y = t.batchnorm(t.input(*p[0]), t.input(*p[1]), t.input(*p[2]), st,
                            Mode::kTrain);
        return t.value(t.sum(t.mul(y, t.input(w))))[0];
      };
      BatchNormState st = BatchNormState::create(2);
      Tape t;
      Var xv = t.param("x", x), gv = t.param("g", g), bv = t.param("b", be);
      Var y = t.batchnorm(xv, gv, bv, st, Mode::kTrain);
      t.backward(t.sum(t.mul(y, t.input(w))));
      CHECK(finite_difference_check(fwd, ps, {t.grad(xv), t.grad(gv), t.grad(bv)}) < 1e-4);
    }

    {  // maxpool + relu + upsample + mse composite
      Tensor x = random_tensor({1, 2, 4, 4}, rng);
      Tensor target = random_tensor({1, 2, 4, 4}, rng);
      std::vector<Tensor*> ps = {&x};
      auto fwd = [&](const std::vector<Tensor*>& p) {
        Tape t;
        Var y = t.upsample_nearest2x(t.maxpool2x2(t.relu(t.input(*p[0]))));
        return t.value(t.mse(y, t.input(target)))[0];
      };
      Tape t;
      Var xv = t.param("x", x);
      Var y = t.upsample_nearest2x(t.maxpool2x2(t.relu(xv)));
      t.backward(t.mse(y, t.input(target)));
      CHECK(finite_difference_check(fwd, ps, {t.grad(xv)}) < 1e-4);
    }

    {  // global_avg_pool + dense
      Tensor x = random_tensor({2, 3, 2, 2}, rng);
      Tensor w = random_tensor({3, 4}, rng);
      Tensor b = random_tensor({4}, rng);
      std::vector<Tensor*> ps = {&x, &w, &b};
      const std::vector<int> labels = {0, 2};
      auto fwd = [&](const std::vector<Tensor*>& p) {
        Tape t;
        Var y = t.dense(t.global_avg_pool(t.input(*p[0])), t.input(*p[1]), t.input(*p[2]));
        return t.value(t.softmax_cross_entropy(y, labels))[0];
      };
      Tape t;
      Var xv = t.param("x", x), wv = t.param("w", w), bv = t.param("b", b);
      Var y = t.dense(t.global_avg_pool(xv), wv, bv);
      t.backward(t.softmax_cross_entropy(y, labels));
      CHECK(finite_difference_check(fwd, ps, {t.grad(xv), t.grad(wv), t.grad(bv)}) < 1e-4);
    }

    {  // dropout with a replayed mask
      Tensor x = random_tensor({32}, rng);
      Tensor w = random_tensor({32}, rng);
      const std::uint64_t mask_seed = 1000 + seed;
      std::vector<Tensor*> ps = {&x};
      auto fwd = [&](const std::vector<Tensor*>& p) {
        Rng mr(mask_seed);
        Tape t;
        Var y = t.dropout(t.input(*p[0]), 0.5, Mode::kTrain, mr);
        return t.value(t.sum(t.mul(y, t.input(w))))[0];
      };
      Rng mr(mask_seed);
      Tape t;
      Var xv = t.param("x", x);
      Var y = t.dropout(xv, 0.5, Mode::kTrain, mr);
      t.backward(t.sum(t.mul(y, t.input(w))));
      CHECK(finite_difference_check(fwd, ps, {t.grad(xv)}) < 1e-4);
    }
  }
}

TEST_CASE("rmsprop: single step matches the closed form") {
  Tensor theta = Tensor::from({1.0});
  Tensor grad = Tensor::from({1.0});
  Tensor s({1});
  RmsPropOptions opt;
  opt.lr = 0.01;
  opt.rho = 0.9;
  opt.eps = 0.0;
  rmsprop_step(theta, grad, s, opt);
  CHECK(s[0] == doctest::Approx(0.1).epsilon(1e-12));
  // delta = -lr/sqrt(0.1) = -lr*3.16228
  CHECK(theta[0] == doctest::Approx(1.0 - 0.01 * 3.1622776601683795).epsilon(1e-9));
}

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged and decays s") {
  Tensor theta = Tensor::from({2.0, -3.0});
  Tensor grad({2});
  Tensor s = Tensor::from({0.4, 0.8});
  RmsPropOptions opt;
  rmsprop_step(theta, grad, s, opt);
  CHECK(theta[0] == 2.0);
  CHECK(theta[1] == -3.0);
  CHECK(s[0] == doctest::Approx(0.36).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.72).epsilon(1e-12));
}

TEST_CASE("rmsprop: constant gradient drives the step magnitude to lr") {
  Tensor theta = Tensor::from({0.0});
  Tensor grad = Tensor::from({2.5});
  Tensor s({1});
  RmsPropOptions opt;
  opt.lr = 1e-3;
  opt.eps = 1e-12;
  double prev = theta[0];
  double step = 0.0;
  for (int i = 0; i < 400; ++i) {
    rmsprop_step(theta, grad, s, opt);
    step = prev - theta[0];
    prev = theta[0];
  }
  CHECK(s[0] == doctest::Approx(2.5 * 2.5).epsilon(1e-6));
  CHECK(step == doctest::Approx(opt.lr).epsilon(1e-6));
  CHECK(s[0] >= 0.0);
}

TEST_CASE("rmsprop accumulator stays non-negative") {
  Rng rng(77);
  Tensor theta = random_tensor({16}, rng);
  Tensor s({16});
  RmsPropOptions opt;
  for (int i = 0; i < 50; ++i) {
    Tensor g = random_tensor({16}, rng, -3, 3);
    rmsprop_step(theta, g, s, opt);
    for (int j = 0; j < 16; ++j) CHECK(s[j] >= 0.0);
  }
}
