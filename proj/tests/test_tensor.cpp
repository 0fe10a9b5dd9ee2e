#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mufuru/gradcheck.hpp"
#include "mufuru/tensor.hpp"

using namespace mufuru;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng, true);
}

// Random values in [-2,2] kept away from zero, for kinked functions.
Tensor random_away_from_zero(Shape shape, Rng& rng, double margin = 0.05) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.value()) {
    do {
      v = rng.uniform(-2.0, 2.0);
    } while (std::fabs(v) < margin);
  }
  return t;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tape tape(false);
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor out = tape.matmul(eye, a);
  CHECK(out.value()[0] == 1.0);
  CHECK(out.value()[1] == 2.0);
  CHECK(out.value()[2] == 3.0);
  CHECK(out.value()[3] == 4.0);

  Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor col = Tensor::from({2, 1}, {5, 7});
  Tensor p = tape.matmul(proj, col);
  CHECK(p.value()[0] == 5.0);
  CHECK(p.value()[1] == 0.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tape tape;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor b = random_tensor({3, 3}, rng);
  const Tensor params[] = {a, b};
  const double err = grad_check(
      [&](Tape& tape) { return tape.sum(tape.matmul(a, b)); }, params, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("elementwise unary values") {
  Tape tape(false);
  Tensor z = Tensor::from({3}, {0.0, 1.0, -1.0});
  CHECK(tape.tanh(z).value()[0] == 0.0);
  CHECK(tape.sigmoid(z).value()[0] == 0.5);
  CHECK(tape.neg(z).value()[1] == -1.0);
  CHECK(tape.abs(z).value()[2] == 1.0);
  CHECK(tape.exp(Tensor::from({1}, {0.0})).value()[0] == 1.0);
  CHECK(tape.scale(z, 3.0).value()[1] == 3.0);
}

TEST_CASE("elementwise binary values and shape checks") {
  Tape tape(false);
  Tensor a = Tensor::from({2}, {1, 4});
  Tensor b = Tensor::from({2}, {3, 2});
  Tensor mx = tape.max(a, b);
  CHECK(mx.value()[0] == 3.0);
  CHECK(mx.value()[1] == 4.0);
  Tensor mn = tape.min(a, b);
  CHECK(mn.value()[0] == 1.0);
  CHECK(mn.value()[1] == 2.0);
  CHECK(tape.add(a, b).value()[0] == 4.0);
  CHECK(tape.sub(a, b).value()[1] == 2.0);
  CHECK(tape.mul(a, b).value()[0] == 3.0);

  Tensor wide = Tensor::zeros({3});
  CHECK_THROWS_AS(tape.add(a, wide), DimensionError);
}

TEST_CASE("log domain error") {
  Tape tape(false);
  CHECK_THROWS_AS(tape.log(Tensor::from({1}, {-1.0})), MathDomainError);
  CHECK_THROWS_AS(tape.log(Tensor::from({1}, {0.0})), MathDomainError);
}

TEST_CASE("abs takes subgradient zero at the kink") {
  Tape tape;
  Tensor x = Tensor::from({3}, {-2.0, 0.0, 2.0}, true);
  tape.backward(tape.sum(tape.abs(x)));
  CHECK(x.grad()[0] == -1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("max/min ties route gradient to the first operand") {
  Tape tape;
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from({2}, {1.0, 5.0}, true);
  Tensor loss = tape.sum(tape.max(a, b));
  tape.backward(loss);
  CHECK(a.grad()[0] == 1.0);  // tie at index 0
  CHECK(b.grad()[0] == 0.0);
  CHECK(a.grad()[1] == 0.0);
  CHECK(b.grad()[1] == 1.0);
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(42);
  const double tol = 1e-6;

  auto check = [&](const char* what, const ScalarFn& f,
                   std::span<const Tensor> params) {
    INFO(what);
    CHECK(grad_check(f, params, 1e-5) <= tol);
  };

  for (EwKind kind : {EwKind::Tanh, EwKind::Sigmoid, EwKind::Neg, EwKind::Exp}) {
    Tensor x = random_tensor({4, 3}, rng);
    const Tensor params[] = {x};
    check("unary", [&, kind](Tape& t) { return t.sum(t.elementwise(kind, x)); },
          params);
  }
  {
    Tensor x = random_away_from_zero({4, 3}, rng);
    const Tensor params[] = {x};
    check("abs", [&](Tape& t) { return t.sum(t.abs(x)); }, params);
  }
  {
    Tensor x = random_tensor({4, 3}, rng, 0.3, 2.0);
    const Tensor params[] = {x};
    check("log", [&](Tape& t) { return t.sum(t.log(x)); }, params);
  }
  {
    Tensor x = random_tensor({4, 3}, rng);
    const Tensor params[] = {x};
    check("scale", [&](Tape& t) { return t.sum(t.scale(x, -1.7)); }, params);
  }
  for (EwKind kind : {EwKind::Add, EwKind::Sub, EwKind::Mul}) {
    Tensor a = random_tensor({5}, rng);
    Tensor b = random_tensor({5}, rng);
    const Tensor params[] = {a, b};
    check("binary",
          [&, kind](Tape& t) { return t.sum(t.elementwise(kind, a, b)); },
          params);
  }
  for (EwKind kind : {EwKind::Max, EwKind::Min}) {
    // keep operands apart so finite differences never cross the tie
    Tensor a = random_tensor({6}, rng);
    Tensor b = Tensor::zeros({6}, true);
    for (std::size_t i = 0; i < 6; ++i) {
      b.value()[i] = a.value()[i] + (rng.coin() ? 0.5 : -0.5);
    }
    const Tensor params[] = {a, b};
    check("max/min",
          [&, kind](Tape& t) { return t.sum(t.elementwise(kind, a, b)); },
          params);
  }
  {
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 2}, rng);
    const Tensor params[] = {a, b};
    check("concat", [&](Tape& t) {
      Tensor c = t.concat(a, b);
      return t.sum(t.mul(c, c));
    }, params);
  }
  {
    Tensor a = random_tensor({3, 5}, rng);
    const Tensor params[] = {a};
    check("slice", [&](Tape& t) {
      Tensor s = t.slice(a, 1, 4);
      return t.sum(t.mul(s, s));
    }, params);
  }
  {
    Tensor x = random_tensor({2, 4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor params[] = {x, w, b};
    check("linear", [&](Tape& t) {
      Tensor y = t.linear(x, w, b);
      return t.sum(t.tanh(y));
    }, params);
  }
  {
    Tensor a = random_tensor({6}, rng);
    const Tensor params[] = {a};
    check("reshape", [&](Tape& t) {
      Tensor r = t.reshape(a, {2, 3});
      return t.sum(t.mul(r, r));
    }, params);
  }
  {
    std::vector<Tensor> logits;
    for (int j = 0; j < 3; ++j) logits.push_back(random_tensor({4}, rng));
    Tensor mixer = random_tensor({4}, rng);
    std::vector<Tensor> params(logits);
    check("softmax_stack", [&](Tape& t) {
      auto w = t.softmax_stack(logits);
      Tensor acc = t.mul(w[0], mixer);
      for (std::size_t j = 1; j < w.size(); ++j) {
        acc = t.add(acc, t.scale(t.mul(w[j], mixer), 0.3 * (double)j + 1.0));
      }
      return t.sum(acc);
    }, params);
  }
  {
    Tensor table = random_tensor({5, 3}, rng);
    const std::vector<int> ids = {0, 2, 2, 4};
    const Tensor params[] = {table};
    check("embed", [&](Tape& t) {
      Tensor e = t.embed(table, ids);
      return t.sum(t.tanh(e));
    }, params);
  }
}

TEST_CASE("concat values and split gradient") {
  Tape tape;
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor b = Tensor::from({1}, {3}, true);
  Tensor c = tape.concat(a, b);
  REQUIRE(c.shape() == Shape{3});
  CHECK(c.value()[0] == 1.0);
  CHECK(c.value()[1] == 2.0);
  CHECK(c.value()[2] == 3.0);

  // gradient of the first half is ones on a, zeros on b
  Tensor loss = tape.sum(tape.slice(c, 0, 2));
  tape.backward(loss);
  CHECK(a.grad()[0] == 1.0);
  CHECK(a.grad()[1] == 1.0);
  CHECK(b.grad()[0] == 0.0);
}

TEST_CASE("concat with an empty tensor is the identity on values") {
  Tape tape(false);
  Tensor x = Tensor::from({3}, {4, 5, 6});
  Tensor e = Tensor::zeros({0});
  Tensor c = tape.concat(x, e);
  REQUIRE(c.shape() == Shape{3});
  CHECK(c.value()[2] == 6.0);
}

TEST_CASE("concat batch extent mismatch") {
  Tape tape(false);
  CHECK_THROWS_AS(tape.concat(Tensor::zeros({2, 3}), Tensor::zeros({3, 3})),
                  DimensionError);
}

TEST_CASE("softmax stack examples") {
  Tape tape(false);
  {
    auto w = tape.softmax_stack({Tensor::from({1}, {0.0}),
                                 Tensor::from({1}, {0.0})});
    CHECK(w[0].value()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w[1].value()[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  {
    auto w = tape.softmax_stack({Tensor::from({1}, {0.0}),
                                 Tensor::from({1}, {0.0}),
                                 Tensor::from({1}, {0.0})});
    for (int j = 0; j < 3; ++j) {
      CHECK(w[j].value()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
  }
  {
    // two-way softmax equals the sigmoid of the logit difference
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
      auto w = tape.softmax_stack({Tensor::from({1}, {a}),
                                   Tensor::from({1}, {b})});
      const double direct0 = 1.0 / (1.0 + std::exp(b - a));
      const double direct1 = 1.0 / (1.0 + std::exp(a - b));
      CHECK(w[0].value()[0] == doctest::Approx(direct0).epsilon(1e-12));
      CHECK(w[1].value()[0] == doctest::Approx(direct1).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(tape.softmax_stack({}), ArgumentError);
}

TEST_CASE("softmax stack is stable and normalized for huge logits") {
  Tape tape(false);
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> logits;
    const int l = 2 + static_cast<int>(rng.below(6));
    for (int j = 0; j < l; ++j) {
      logits.push_back(Tensor::uniform({8}, -1e3, 1e3, rng, false));
    }
    auto w = tape.softmax_stack(logits);
    for (int d = 0; d < 8; ++d) {
      double sum = 0.0;
      for (int j = 0; j < l; ++j) {
        CHECK(w[j].value()[d] >= 0.0);
        CHECK(std::isfinite(w[j].value()[d]));
        sum += w[j].value()[d];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward on a leaf and on fan-out") {
  {
    Tape tape;
    Tensor x = Tensor::from({}, {3.0}, true);
    tape.backward(x);
    CHECK(x.grad()[0] == 1.0);
  }
  {
    Tape tape;
    Tensor x = Tensor::from({}, {3.0}, true);
    Tensor loss = tape.add(x, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == 2.0);
  }
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = tape.scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ArgumentError);
}

TEST_CASE("backward of sum(tanh(W x)) matches finite differences") {
  Rng rng(5);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({3, 1}, rng);
  const Tensor params[] = {w, x};
  const double err = grad_check(
      [&](Tape& t) { return t.sum(t.tanh(t.matmul(w, x))); }, params, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("shared subexpression equals duplicated subexpression") {
  Rng rng(9);
  Tensor x1 = random_tensor({4}, rng);
  Tensor y1 = random_tensor({4}, rng);
  Tensor x2 = x1.clone();
  Tensor y2 = y1.clone();

  Tape t1;
  Tensor shared = t1.mul(x1, y1);
  t1.backward(t1.sum(t1.add(shared, shared)));

  Tape t2;
  t2.backward(t2.sum(t2.add(t2.mul(x2, y2), t2.mul(x2, y2))));

  for (int i = 0; i < 4; ++i) {
    CHECK(x1.grad()[i] == x2.grad()[i]);
    CHECK(y1.grad()[i] == y2.grad()[i]);
  }
}

TEST_CASE("grad_check on a polynomial is nearly exact") {
  Tensor theta = Tensor::from({}, {3.0}, true);
  const Tensor params[] = {theta};
  const double err = grad_check(
      [&](Tape& t) { return t.mul(theta, theta); }, params, 1e-5);
  CHECK(err <= 1e-8);
}

TEST_CASE("grad_check on a constant function is zero") {
  Tensor theta = Tensor::from({}, {1.0}, true);
  const Tensor params[] = {theta};
  const double err = grad_check(
      [&](Tape&) { return Tensor::scalar(4.0); }, params, 1e-5);
  CHECK(err == 0.0);
}

TEST_CASE("grad_check flags a wrong backward rule") {
  // negative control: pretend d/dx of 2x is 3
  Tensor x = Tensor::from({}, {1.5}, true);
  const Tensor params[] = {x};
  const double err = grad_check(
      [&](Tape& t) {
        Tensor out = t.alloc({}, true);
        out.value()[0] = 2.0 * x.value()[0];
        t.touch(x);
        t.touch(out);
        auto xd = x.handle(), od = out.handle();
        t.record([xd, od] { xd->grad[0] += 3.0 * od->grad[0]; });
        return out;
      },
      params, 1e-5);
  CHECK(err > 0.1);
}

TEST_CASE("tensor invariants") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(shape_size(t.shape()) == t.size());
  CHECK_THROWS_AS(Tensor::from({2}, {1.0}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2}).item(), ArgumentError);
}
