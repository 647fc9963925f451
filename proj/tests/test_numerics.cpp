// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lusifer/autograd.hpp"
#include "lusifer/optim.hpp"
#include "lusifer/params.hpp"
#include "lusifer/rng.hpp"

using namespace lusifer;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& x : t.data) x = rng.normal(0.0, scale);
  return t;
}

// Runs grad_check over a scalar loss built from the params by `build`.
double kernel_grad_err(ParamSet& ps, const std::function<VarId(Tape&)>& build) {
  auto eval = [&](bool with_grad) {
    Tape tape;
    VarId loss = build(tape);
    double value = tape.scalar_value(loss);
    if (with_grad) tape.backward(loss);
    return value;
  };
  return grad_check(ps, eval, 1e-5).max_rel_err;
}

}  // namespace

TEST_CASE("matmul identity and hand-computed product") {
  Tape t;
  VarId eye = t.constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
  VarId m = t.constant(Tensor::from({2, 2}, {3.5, -1, 2, 7}));
  VarId out = t.matmul(eye, m);
  CHECK(t.val(out).data == std::vector<double>{3.5, -1, 2, 7});

  VarId a = t.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
  VarId ones = t.constant(Tensor::from({2, 1}, {1, 1}));
  VarId prod = t.matmul(a, ones);
  CHECK(t.val(prod).data == std::vector<double>{3, 7});
}

TEST_CASE("matmul degenerate and mismatched shapes") {
  Tape t;
  VarId a = t.constant(Tensor::zeros({0, 3}));
  VarId b = t.constant(Tensor::zeros({3, 4}));
  VarId out = t.matmul(a, b);
  CHECK(t.val(out).shape == std::vector<int>{0, 4});
  CHECK(t.val(out).numel() == 0);

  VarId bad = t.constant(Tensor::zeros({2, 5}));
  CHECK_THROWS_AS((void)t.matmul(bad, b), ShapeError);
}

TEST_CASE("softmax symmetry, shift invariance, direct formula") {
  Tape t;
  VarId x = t.constant(Tensor::from({3}, {0, 0, 0}));
  VarId y = t.softmax(x, 0);
  for (double v : t.val(y).data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor base = random_tensor({4, 5}, rng);
    Tensor shifted = base;
    const double c = rng.normal(0, 3);
    for (auto& v : shifted.data) v += c;
    Tape t2;
    VarId s1 = t2.softmax(t2.constant(base), 1);
    VarId s2 = t2.softmax(t2.constant(shifted), 1);
    CHECK(max_abs_diff(t2.val(s1), t2.val(s2)) <= 1e-12);
    // rows sum to one
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int j = 0; j < 5; ++j) s += t2.val(s1).at2(i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  Tape t3;
  VarId z = t3.softmax(t3.constant(Tensor::from({2}, {std::log(1.0), std::log(3.0)})), 0);
  CHECK(t3.val(z).at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t3.val(z).at(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("cross entropy worked values") {
  Tape t;
  VarId uniform = t.constant(Tensor::zeros({1, 4}));
  VarId loss = t.cross_entropy_mean(uniform, {2}, {1});
  CHECK(t.scalar_value(loss) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // one-hot-correct logits: loss -> 0 as margin grows
  double prev = 1e9;
  for (double margin : {2.0, 5.0, 10.0, 30.0}) {
    Tape t2;
    VarId l = t2.constant(Tensor::from({1, 3}, {margin, 0, 0}));
    double v = t2.scalar_value(t2.cross_entropy_mean(l, {0}, {1}));
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-10);

  Tape t3;
  VarId l2 = t3.constant(Tensor::from({1, 2}, {2, 0}));
  double expect = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  double got = t3.scalar_value(t3.cross_entropy_mean(l2, {0}, {1}));
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.126928).epsilon(1e-5));

  // nonnegative on random logits
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Tape t4;
    VarId l3 = t4.constant(random_tensor({4, 6}, rng, 2.0));
    std::vector<std::int32_t> targets = {0, 5, 2, 3};
    double v = t4.scalar_value(t4.cross_entropy_mean(l3, targets, {1, 1, 1, 1}));
    CHECK(v >= 0.0);
  }

  CHECK_THROWS_AS((void)t3.cross_entropy_mean(l2, {0}, {0}), DataError);
}

TEST_CASE("adamw worked updates") {
  SUBCASE("zero gradient, zero weight decay leaves params unchanged") {
    ParamSet ps;
    Param& p = ps.add("w", Tensor::from({3}, {1.0, -2.0, 0.5}));
    AdamW opt({.lr = 1e-3, .weight_decay = 0.0});
    Tensor before = p.value;
    opt.step(ps);
    CHECK(bitwise_equal(before, p.value));
  }
  SUBCASE("first step with g=0.5 moves by about -lr") {
    ParamSet ps;
    Param& p = ps.add("theta", Tensor::from({1}, {0.7}));
    p.grad.data[0] = 0.5;
    AdamW opt({.lr = 1e-3, .weight_decay = 0.0});
    opt.step(ps);
    // bias correction makes mhat=g, vhat=g^2, so delta ~ -lr
    CHECK(p.value.data[0] == doctest::Approx(0.7 - 1e-3).epsilon(1e-7));
  }
  SUBCASE("decay-only step") {
    ParamSet ps;
    Param& p = ps.add("theta", Tensor::from({1}, {2.0}));
    AdamW opt({.lr = 1e-3, .weight_decay = 0.01});
    opt.step(ps);
    CHECK(p.value.data[0] == doctest::Approx(2.0 * (1.0 - 1e-3 * 0.01)).epsilon(1e-12));
  }
  SUBCASE("NaN gradient rejected before mutation") {
    ParamSet ps;
    Param& p = ps.add("theta", Tensor::from({2}, {1.0, 2.0}));
    p.grad.data[1] = std::nan("");
    AdamW opt({.lr = 1e-3});
    Tensor before = p.value;
    CHECK_THROWS_AS(opt.step(ps), NumericError);
    CHECK(bitwise_equal(before, p.value));
  }
  SUBCASE("bitwise deterministic") {
    auto run = [] {
      ParamSet ps;
      Param& p = ps.add("w", Tensor::from({4}, {0.1, 0.2, 0.3, 0.4}));
      AdamW opt({.lr = 3e-4, .weight_decay = 0.01});
      Rng rng(11);
      for (int s = 0; s < 20; ++s) {
        for (auto& g : p.grad.data) g = rng.normal();
        opt.step(ps);
        ps.zero_grads();
      }
      return p.value;
    };
    CHECK(bitwise_equal(run(), run()));
  }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  const double peak = 5e-5;
  const long total = 1000;
  const double warmup = 0.1 * total;
  CHECK(cosine_lr(100, total, peak, 0.1) == doctest::Approx(peak).epsilon(1e-12));
  CHECK(cosine_lr(total, total, peak, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
  const long mid = static_cast<long>(warmup + (total - warmup) / 2);
  CHECK(cosine_lr(mid, total, peak, 0.1) == doctest::Approx(peak / 2).epsilon(1e-9));
  CHECK(cosine_lr(0, total, peak, 0.1) == 0.0);
  CHECK_THROWS_AS((void)cosine_lr(0, 0, peak, 0.1), DataError);
}

TEST_CASE("gradient clipping") {
  Tensor g = Tensor::from({2}, {0.3, 0.4});  // norm 0.5
  Tensor before = g;
  clip_grad_norm({&g}, 1.0);
  CHECK(bitwise_equal(before, g));

  Tensor big = Tensor::from({2}, {3.0, 4.0});
  double norm = clip_grad_norm({&big}, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(big.data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(big.data[1] == doctest::Approx(0.8).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor v = random_tensor({7}, rng, 2.0);
    const double pre = l2_norm(v);
    clip_grad_norm({&v}, 1.0);
    CHECK(l2_norm(v) == doctest::Approx(std::min(pre, 1.0)).epsilon(1e-12));
    // idempotent
    Tensor once = v;
    clip_grad_norm({&v}, 1.0);
    CHECK(max_abs_diff(once, v) <= 1e-15);
  }
}

TEST_CASE("grad_check exact on quadratic loss") {
  ParamSet ps;
  Rng rng(42);
  ps.add("theta", random_tensor({6}, rng));
  auto eval = [&](bool with_grad) {
    Tape t;
    VarId th = ps.at("theta").use(t);
    VarId loss = t.sum_all(t.mul(th, th));
    double v = t.scalar_value(loss);
    if (with_grad) t.backward(loss);
    return v;
  };
  auto report = grad_check(ps, eval, 1e-6);
  CHECK(report.max_rel_err < 1e-7);
  CHECK(report.coords_checked == 6);
}

TEST_CASE("every kernel matches central finite differences over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);

    {  // matmul (3D x 2D) + add_bias + gelu
      ParamSet ps;
      ps.add("a", random_tensor({2, 3, 4}, rng, 0.8));
      ps.add("w", random_tensor({4, 5}, rng, 0.8));
      ps.add("b", random_tensor({5}, rng, 0.5));
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId y = t.add_bias(t.matmul(ps.at("a").use(t), ps.at("w").use(t)), ps.at("b").use(t));
        return t.sum_all(t.mul(y, t.gelu(y)));
      });
      CHECK(err <= 1e-4);
    }
    {  // bmm + transpose + softmax + mul
      ParamSet ps;
      ps.add("q", random_tensor({2, 3, 4}, rng, 0.7));
      ps.add("k", random_tensor({2, 3, 4}, rng, 0.7));
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId scores = t.bmm(ps.at("q").use(t), t.transpose_last(ps.at("k").use(t)));
        VarId w = t.softmax(scores, 2);
        return t.mean_all(t.mul(w, scores));
      });
      CHECK(err <= 1e-4);
    }
    {  // layer_norm
      ParamSet ps;
      ps.add("x", random_tensor({3, 6}, rng));
      ps.add("gamma", random_tensor({6}, rng, 0.5));
      ps.add("beta", random_tensor({6}, rng, 0.5));
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId y = t.layer_norm(ps.at("x").use(t), ps.at("gamma").use(t), ps.at("beta").use(t));
        return t.sum_all(t.mul(y, y));
      });
      CHECK(err <= 1e-4);
    }
    {  // concat + slice + scale + add
      ParamSet ps;
      ps.add("a", random_tensor({2, 2, 3}, rng));
      ps.add("b", random_tensor({2, 1, 3}, rng));
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId c = t.concat(ps.at("a").use(t), ps.at("b").use(t), 1);
        VarId s = t.slice(c, 1, 1, 2);
        VarId u = t.add(s, t.scale(s, -0.25));
        return t.sum_all(t.mul(u, u));
      });
      CHECK(err <= 1e-4);
    }
    {  // embedding + mean_pool_valid + normalize_rows + reshape
      ParamSet ps;
      ps.add("table", random_tensor({7, 4}, rng));
      std::vector<std::int32_t> ids = {0, 3, 6, 2, 5, 1};
      std::vector<std::uint8_t> valid = {1, 1, 0, 1, 0, 1};
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId e = t.embedding(ps.at("table").use(t), ids, {2, 3});
        VarId pooled = t.mean_pool_valid(e, valid);
        VarId n = t.normalize_rows(pooled);
        VarId flat = t.reshape(n, {8});
        return t.mean_all(t.mul(flat, flat));
      });
      CHECK(err <= 1e-4);
    }
    {  // cross_entropy + tile_rows
      ParamSet ps;
      ps.add("logits", random_tensor({4, 5}, rng, 1.5));
      ps.add("tok", random_tensor({3}, rng));
      std::vector<std::int32_t> targets = {1, 0, 4, 2};
      std::vector<std::uint8_t> include = {1, 0, 1, 1};
      double err = kernel_grad_err(ps, [&](Tape& t) {
        VarId ce = t.cross_entropy_mean(ps.at("logits").use(t), targets, include);
        VarId tiles = t.tile_rows(ps.at("tok").use(t), 2);
        return t.add(ce, t.mean_all(t.mul(tiles, tiles)));
      });
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("rng determinism and fork independence") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(123);
  Rng f1 = c.fork("x");
  Rng f2 = c.fork("y");
  CHECK(f1.next_u64() != f2.next_u64());
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}
