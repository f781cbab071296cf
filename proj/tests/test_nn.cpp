#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sidekick/nn.hpp"

using namespace sidekick;
using namespace sidekick::nn;

namespace {

// Scalar probe loss: dot product of a tensor with fixed pseudo-random
// coefficients. Gives every output element a distinct, param-independent
// weight so gradient errors cannot cancel.
struct Probe {
  std::vector<double> w;
  explicit Probe(std::size_t n, std::uint64_t seed = 123) {
    Rng rng(seed, "probe");
    w.resize(n);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  }
  template <typename Real>
  double operator()(const Tensor<Real>& t) const {
    double l = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) l += w[i] * double(t[i]);
    return l;
  }
  template <typename Real>
  Tensor<Real> grad(const Shape& shape) const {
    Tensor<Real> g(shape);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = Real(w[i]);
    return g;
  }
};

template <typename Real>
Tensor<Real> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<Real> t(shape);
  for (auto& v : t.data) v = Real(rng.uniform(-scale, scale));
  return t;
}

}  // namespace

TEST_CASE("dense layer gradients match finite differences over many seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, "dense-test");
    ParamStore<double> store;
    Dense<double> layer("lin", 7, 5, Activation::tanh_act, rng);
    layer.register_params(store);
    auto x = random_tensor<double>({7}, rng);
    Probe probe(5, seed);

    DenseCache<double> cache;
    auto y = layer.forward(x, cache);
    store.zero_grads();
    layer.backward(cache, probe.grad<double>({5}));

    auto report = finite_diff_check(store, [&] {
      DenseCache<double> c;
      return probe(layer.forward(x, c));
    });
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("dense backward also produces the input gradient") {
  Rng rng(3, "dense-input");
  ParamStore<double> store;
  Dense<double> layer("lin", 4, 3, Activation::sigmoid, rng);
  layer.register_params(store);
  auto x = random_tensor<double>({4}, rng);
  Probe probe(3);
  DenseCache<double> cache;
  layer.forward(x, cache);
  auto gx = layer.backward(cache, probe.grad<double>({3}));
  double eps = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    auto xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    DenseCache<double> c;
    double fd = (probe(layer.forward(xp, c)) - probe(layer.forward(xm, c))) /
                (2 * eps);
    CHECK(double(gx[i]) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("conv and pooling gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed, "conv-test");
    ParamStore<double> store;
    Conv2d<double> conv("conv", 1, 2, Activation::tanh_act, rng);
    conv.register_params(store);
    AvgPool2<double> pool;
    auto x = random_tensor<double>({1, 4, 4}, rng);
    Probe probe(2 * 2 * 2, seed);

    ConvCache<double> cc;
    PoolCache<double> pc;
    auto y = pool.forward(conv.forward(x, cc), pc);
    store.zero_grads();
    conv.backward(cc, pool.backward(pc, probe.grad<double>({2, 2, 2})));

    auto report = finite_diff_check(store, [&] {
      ConvCache<double> c;
      PoolCache<double> p;
      return probe(pool.forward(conv.forward(x, c), p));
    });
    CHECK(report.pass);
  }
}

TEST_CASE("transposed conv doubles spatial dims and passes finite differences") {
  Rng rng(7, "deconv-test");
  ParamStore<double> store;
  Deconv2d<double> deconv("up", 2, 1, Activation::sigmoid, rng);
  deconv.register_params(store);
  auto x = random_tensor<double>({2, 3, 3}, rng);
  Probe probe(36);

  DeconvCache<double> cache;
  auto y = deconv.forward(x, cache);
  REQUIRE(y.shape == Shape{1, 6, 6});
  store.zero_grads();
  deconv.backward(cache, probe.grad<double>({1, 6, 6}));

  auto report = finite_diff_check(store, [&] {
    DeconvCache<double> c;
    return probe(deconv.forward(x, c));
  });
  CHECK(report.pass);
}

TEST_CASE("recurrent cell gradients (params, input, state) match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, "gru-test");
    ParamStore<double> store;
    GruCell<double> cell("gru", 4, 5, rng);
    cell.register_params(store);
    auto x = random_tensor<double>({4}, rng);
    auto h = random_tensor<double>({5}, rng, 0.5);
    Probe probe(5, seed);

    GruCache<double> cache;
    cell.forward(h, x, cache);
    store.zero_grads();
    auto [gx, gh] = cell.backward(cache, probe.grad<double>({5}));

    auto report = finite_diff_check(store, [&] {
      GruCache<double> c;
      return probe(cell.forward(h, x, c));
    });
    CHECK(report.pass);

    double eps = 1e-6;
    for (std::size_t i = 0; i < 4; ++i) {
      auto xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      GruCache<double> c;
      double fd = (probe(cell.forward(h, xp, c)) - probe(cell.forward(h, xm, c))) /
                  (2 * eps);
      CHECK(double(gx[i]) == doctest::Approx(fd).epsilon(1e-5));
    }
    for (std::size_t i = 0; i < 5; ++i) {
      auto hp = h, hm = h;
      hp[i] += eps;
      hm[i] -= eps;
      GruCache<double> c;
      double fd = (probe(cell.forward(hp, x, c)) - probe(cell.forward(hm, x, c))) /
                  (2 * eps);
      CHECK(double(gh[i]) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("recurrent cell maps zero input and state to zero output") {
  Rng rng(1, "gru-zero");
  GruCell<double> cell("gru", 3, 4, rng);
  // Biases initialize to zero; candidate tanh(0) = 0 and h' interpolates
  // between two zeros.
  Tensor<double> x({3}), h({4});
  GruCache<double> cache;
  auto out = cell.forward(h, x, cache);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("softmax backward matches finite differences") {
  Rng rng(5, "softmax-test");
  std::size_t n = 6;
  std::vector<double> logits(n);
  for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
  Probe probe(n);
  std::vector<double> probs(n);
  softmax(logits.data(), probs.data(), n);
  std::vector<double> gl(n, 0.0);
  Tensor<double> gp({n});
  for (std::size_t i = 0; i < n; ++i) gp[i] = probe.w[i];
  softmax_backward_acc(probs.data(), gp.ptr(), gl.data(), n);
  double eps = 1e-6;
  for (std::size_t i = 0; i < n; ++i) {
    auto lp = logits, lm = logits;
    lp[i] += eps;
    lm[i] -= eps;
    std::vector<double> pp(n), pm(n);
    softmax(lp.data(), pp.data(), n);
    softmax(lm.data(), pm.data(), n);
    double fp = 0, fm = 0;
    for (std::size_t k = 0; k < n; ++k) {
      fp += probe.w[k] * pp[k];
      fm += probe.w[k] * pm[k];
    }
    CHECK(gl[i] == doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-5));
  }
}

TEST_CASE("adam optimizer minimizes a quadratic") {
  ParamStore<double> store;
  Param<double> p("w", {3});
  p.value[0] = 1.0;
  p.value[1] = -2.0;
  p.value[2] = 0.5;
  store.add(&p);
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  for (int step = 0; step < 400; ++step) {
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = 2.0 * p.value[i];
    store.adam_step(cfg);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p.value[i]) < 1e-2);
}

TEST_CASE("frozen groups are skipped by the optimizer") {
  ParamStore<double> store;
  Param<double> a("sense/w", {1}), b("decode/w", {1});
  a.value[0] = 1.0;
  b.value[0] = 1.0;
  store.add(&a);
  store.add(&b);
  store.freeze_group("sense");
  a.grad[0] = 1.0;
  b.grad[0] = 1.0;
  AdamConfig cfg;
  store.adam_step(cfg);
  CHECK(a.value[0] == 1.0);
  CHECK(b.value[0] != 1.0);
  CHECK(a.grad[0] == 0.0);  // stale gradients cleared either way
}

TEST_CASE("non-finite gradients are rejected with the offending group named") {
  ParamStore<double> store;
  Param<double> p("act/w", {1});
  store.add(&p);
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  AdamConfig cfg;
  bool threw = false;
  try {
    store.adam_step(cfg);
  } catch (const NonFiniteError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("'act'") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("orthogonal init produces orthonormal rows") {
  Rng rng(9, "ortho");
  Tensor<double> w({6, 6});
  init_orthogonal(w, 6, rng);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) {
      double dot = 0;
      for (std::size_t i = 0; i < 6; ++i) dot += w[r * 6 + i] * w[c * 6 + i];
      CHECK(dot == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-9));
    }
}

TEST_CASE("momentum sgd with weight decay shrinks an untouched parameter") {
  ParamStore<double> store;
  Param<double> p("w", {1});
  p.value[0] = 1.0;
  store.add(&p);
  SgdMomentumConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.momentum = 0.0;
  store.sgd_momentum_step(cfg);
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 0.5));
}
