#include <cmath>
#include <random>

#include "cfx/adam.hpp"
#include "cfx/tape.hpp"
#include "cfx/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace cfx;

namespace {

// Naive triple-loop product, the independent matmul oracle.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

Tensor randn(Shape s, std::mt19937_64& rng, double sd = 1.0) {
  return Tensor::randn(std::move(s), rng, sd);
}

}  // namespace

TEST_SUITE_BEGIN("numcore");

TEST_CASE("matmul identity and unit selection") {
  Tape t;
  Var a = t.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var eye = t.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Tensor& c = t.val(t.matmul(a, eye));
  CHECK(c.data == std::vector<double>{1, 2, 3, 4});

  Var row = t.leaf(Tensor::matrix(1, 2, {1, 0}));
  Var col = t.leaf(Tensor::matrix(2, 1, {2, 5}));
  CHECK(t.val(t.matmul(row, col)).item() == 2.0);
}

TEST_CASE("matmul matches triple-loop oracle and flags shape mismatch") {
  std::mt19937_64 rng(42);
  Tensor a = randn({3, 4}, rng), b = randn({4, 2}, rng);
  Tape t;
  const Tensor& c = t.val(t.matmul(t.leaf(a), t.leaf(b)));
  Tensor expect = matmul_oracle(a, b);
  for (size_t i = 0; i < c.data.size(); ++i) CHECK(c.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));

  Var bad = t.leaf(randn({3, 3}, rng));
  CHECK_THROWS_WITH_AS(t.matmul(t.leaf(a), bad), doctest::Contains("[3x4]"), DimError);
}

TEST_CASE("matmul associativity against the oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = randn({3, 5}, rng), b = randn({5, 4}, rng), c = randn({4, 2}, rng);
    Tensor left = matmul_oracle(matmul_oracle(a, b), c);
    Tape t;
    const Tensor& right = t.val(t.matmul(t.leaf(a), t.matmul(t.leaf(b), t.leaf(c))));
    for (size_t i = 0; i < right.data.size(); ++i) {
      CHECK(std::abs(right.data[i] - left.data[i]) < 1e-9);
    }
  }
}

TEST_CASE("softmax basics") {
  Tape t;
  const Tensor& sym = t.val(t.softmax_lastdim(t.leaf(Tensor::vec({0, 0}))));
  CHECK(sym.data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sym.data[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor& big = t.val(t.softmax_lastdim(t.leaf(Tensor::vec({1000, 0}))));
  CHECK(big.all_finite());
  CHECK(big.data[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.data[1] == doctest::Approx(0.0).epsilon(1e-12));

  // Direct exp/sum oracle.
  const Tensor& probs = t.val(t.softmax_lastdim(t.leaf(Tensor::vec({1, 2, 3}))));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(probs.data[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-15));
  CHECK(probs.data[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-15));
  CHECK(probs.data[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one and shift invariance") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = randn({4, 7}, rng, 3.0);
    Tape t;
    const Tensor& y = t.val(t.softmax_lastdim(t.leaf(x)));
    for (int i = 0; i < 4; ++i) {
      double s = 0;
      for (int j = 0; j < 7; ++j) s += y.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    Tensor shifted = x;
    const double c = 17.25;
    for (double& v : shifted.data) v += c;
    const Tensor& y2 = t.val(t.softmax_lastdim(t.leaf(shifted)));
    for (size_t i = 0; i < y.data.size(); ++i) CHECK(std::abs(y.data[i] - y2.data[i]) <= 1e-9);
  }
}

TEST_CASE("elementwise basics") {
  Tape t;
  CHECK(t.val(t.sigmoid(t.leaf(Tensor::scalar(0)))).item() == doctest::Approx(0.5));
  CHECK(t.val(t.tanh(t.leaf(Tensor::scalar(0)))).item() == 0.0);

  // Constant row: normalized values collapse to zero, output is the shift.
  Var x = t.leaf(Tensor::matrix(1, 4, {3, 3, 3, 3}));
  Var g = t.leaf(Tensor::vec({2, 2, 2, 2}));
  Var b = t.leaf(Tensor::vec({0.5, 0.5, 0.5, 0.5}));
  const Tensor& y = t.val(t.layer_norm(x, g, b));
  for (int j = 0; j < 4; ++j) CHECK(y.at(0, j) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward on simple closed forms") {
  // loss = sum(w * w), w = [1, 2] -> grad [2, 4]
  {
    Tape t;
    Var w = t.leaf(Tensor::vec({1, 2}), true);
    Var loss = t.sum(t.mul(w, w));
    t.backward(loss);
    CHECK(t.grad(w).data[0] == doctest::Approx(2.0));
    CHECK(t.grad(w).data[1] == doctest::Approx(4.0));
  }
  // loss = sigmoid(w . x) at w = 0 -> grad 0.25 * x
  {
    Tape t;
    Var w = t.leaf(Tensor::vec({0, 0, 0}), true);
    Var x = t.leaf(Tensor::vec({0.3, -1.2, 2.0}));
    Var loss = t.sigmoid(t.dot(w, x));
    t.backward(loss);
    for (int i = 0; i < 3; ++i) {
      CHECK(t.grad(w).data[static_cast<size_t>(i)] ==
            doctest::Approx(0.25 * t.val(x).data[static_cast<size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Var w = t.leaf(Tensor::vec({1, 2}), true);
  CHECK_THROWS_AS(t.backward(t.mul(w, w)), InputError);
}

TEST_CASE("finite differences cover every op") {
  std::mt19937_64 rng(11);

  auto check_op = [&](const char* name,
                      const std::function<Var(Tape&, const std::vector<Var>&)>& fn,
                      std::vector<Tensor> inputs) {
    CAPTURE(name);
    ParamStore store;
    for (size_t i = 0; i < inputs.size(); ++i) {
      store.add("in" + std::to_string(i), std::move(inputs[i]));
    }
    // Weight the op output by a fixed random tensor so the scalar loss
    // exercises every output entry. The weight must be identical across
    // rebuilds, so it is drawn once per op.
    Shape out_shape;
    {
      Tape probe;
      auto b = store.bind(probe, false);
      out_shape = probe.val(fn(probe, b)).shape;
    }
    Tensor w = Tensor::randn(out_shape, rng, 1.0);
    auto loss_fn = [&fn, w](Tape& t, const std::vector<Var>& p) {
      return t.sum(t.mul(fn(t, p), t.leaf(w)));
    };
    auto res = cfxtest::grad_check(store, loss_fn);
    CAPTURE(res.where);
    CHECK(res.ok);
  };

  check_op("add", [&](Tape& t, const std::vector<Var>& p) {
    return t.add(p[0], p[1]);
  }, {randn({3, 4}, rng), randn({3, 4}, rng)});

  check_op("sub", [&](Tape& t, const std::vector<Var>& p) {
    return t.sub(p[0], p[1]);
  }, {randn({3, 4}, rng), randn({3, 4}, rng)});

  check_op("mul", [&](Tape& t, const std::vector<Var>& p) {
    return t.mul(p[0], p[1]);
  }, {randn({3, 4}, rng), randn({3, 4}, rng)});

  check_op("scale", [&](Tape& t, const std::vector<Var>& p) {
    return t.scale(p[0], -1.7);
  }, {randn({5}, rng)});

  check_op("add_rowvec", [&](Tape& t, const std::vector<Var>& p) {
    return t.add_rowvec(p[0], p[1]);
  }, {randn({3, 4}, rng), randn({4}, rng)});

  check_op("matmul", [&](Tape& t, const std::vector<Var>& p) {
    return t.matmul(p[0], p[1]);
  }, {randn({3, 5}, rng), randn({5, 2}, rng)});

  check_op("matmul_nt", [&](Tape& t, const std::vector<Var>& p) {
    return t.matmul_nt(p[0], p[1]);
  }, {randn({3, 5}, rng), randn({4, 5}, rng)});

  check_op("matvec", [&](Tape& t, const std::vector<Var>& p) {
    return t.matvec(p[0], p[1]);
  }, {randn({4, 3}, rng), randn({3}, rng)});

  check_op("dot", [&](Tape& t, const std::vector<Var>& p) {
    return t.dot(p[0], p[1]);
  }, {randn({6}, rng), randn({6}, rng)});

  check_op("tanh", [&](Tape& t, const std::vector<Var>& p) {
    return t.tanh(p[0]);
  }, {randn({3, 3}, rng)});

  check_op("sigmoid", [&](Tape& t, const std::vector<Var>& p) {
    return t.sigmoid(p[0]);
  }, {randn({3, 3}, rng)});

  check_op("gelu", [&](Tape& t, const std::vector<Var>& p) {
    return t.gelu(p[0]);
  }, {randn({3, 3}, rng)});

  check_op("softmax_lastdim", [&](Tape& t, const std::vector<Var>& p) {
    return t.softmax_lastdim(p[0]);
  }, {randn({3, 5}, rng)});

  check_op("layer_norm", [&](Tape& t, const std::vector<Var>& p) {
    return t.layer_norm(p[0], p[1], p[2]);
  }, {randn({3, 6}, rng), randn({6}, rng), randn({6}, rng)});

  check_op("reshape", [&](Tape& t, const std::vector<Var>& p) {
    return t.reshape(p[0], {6});
  }, {randn({2, 3}, rng)});

  check_op("gather_rows", [&](Tape& t, const std::vector<Var>& p) {
    return t.gather_rows(p[0], {2, 0, 2});
  }, {randn({4, 3}, rng)});

  check_op("slice_cols", [&](Tape& t, const std::vector<Var>& p) {
    return t.slice_cols(p[0], 1, 3);
  }, {randn({3, 6}, rng)});

  check_op("concat_cols", [&](Tape& t, const std::vector<Var>& p) {
    return t.concat_cols({p[0], p[1]});
  }, {randn({3, 2}, rng), randn({3, 4}, rng)});

  check_op("concat_rows", [&](Tape& t, const std::vector<Var>& p) {
    return t.concat_rows({p[0], p[1]});
  }, {randn({2, 3}, rng), randn({4, 3}, rng)});

  check_op("im2col_rows", [&](Tape& t, const std::vector<Var>& p) {
    return t.im2col_rows(p[0], 3, 1, 1);
  }, {randn({5, 2}, rng)});

  check_op("colwise_max", [&](Tape& t, const std::vector<Var>& p) {
    return t.colwise_max(p[0]);
  }, {randn({5, 4}, rng)});

  check_op("scalar_mix", [&](Tape& t, const std::vector<Var>& p) {
    return t.scalar_mix({p[0], p[1], p[2]}, p[3], p[4]);
  }, {randn({3, 4}, rng), randn({3, 4}, rng), randn({3, 4}, rng), randn({3}, rng),
      randn({1}, rng)});

  check_op("softmax_xent", [&](Tape& t, const std::vector<Var>& p) {
    return t.softmax_xent(p[0], 2);
  }, {randn({5}, rng)});

  check_op("bce(label=1)", [&](Tape& t, const std::vector<Var>& p) {
    return t.bce(t.sigmoid(p[0]), 1);
  }, {randn({1}, rng)});

  check_op("bce(label=0)", [&](Tape& t, const std::vector<Var>& p) {
    return t.bce(t.sigmoid(p[0]), 0);
  }, {randn({1}, rng)});
}

TEST_CASE("dropout backward reuses the forward mask") {
  std::mt19937_64 rng(5);
  Tape t;
  Var x = t.leaf(Tensor::full({1, 64}, 1.0), true);
  std::mt19937_64 drop_rng(9);
  Var y = t.dropout(x, 0.5, drop_rng);
  t.backward(t.sum(y));
  const Tensor& yv = t.val(y);
  const Tensor& gx = t.grad(x);
  for (size_t i = 0; i < yv.data.size(); ++i) {
    CHECK(gx.data[i] == yv.data[i]);  // identical mask * scale on ones
  }
  (void)rng;
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  ParamStore store;
  store.add("w", Tensor::vec({1.0, -2.0}));
  AdamState state = AdamState::init(store, 0.1);
  std::vector<Tensor> grads{Tensor::zeros({2})};
  adam_step(store, grads, state);
  CHECK(store.value(0).data == std::vector<double>{1.0, -2.0});
  CHECK(state.step == 1);
}

TEST_CASE("adam first step moves by about the learning rate") {
  ParamStore store;
  store.add("w", Tensor::vec({0.0, 0.0}));
  AdamState state = AdamState::init(store, 0.1);
  std::vector<Tensor> grads{Tensor::vec({3.0, -0.2})};
  adam_step(store, grads, state);
  // Bias-corrected first step: lr * g / (|g| + eps') with both moments built
  // from the same gradient.
  CHECK(store.value(0).data[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(store.value(0).data[1] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("adam converges on a quadratic and matches the scalar recurrence") {
  ParamStore store;
  store.add("w", Tensor::scalar(0.0));
  AdamState state = AdamState::init(store, 0.1);

  // Independent plain-double recurrence.
  double w = 0.0, m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;

  for (int step = 1; step <= 100; ++step) {
    const double g = 2.0 * (store.value(0).item() - 3.0);
    std::vector<Tensor> grads{Tensor::scalar(g)};
    adam_step(store, grads, state);

    const double g2 = 2.0 * (w - 3.0);
    m = b1 * m + (1 - b1) * g2;
    v = b2 * v + (1 - b2) * g2 * g2;
    const double mhat = m / (1 - std::pow(b1, step));
    const double vhat = v / (1 - std::pow(b2, step));
    w -= lr * mhat / (std::sqrt(vhat) + eps);

    CHECK(store.value(0).item() == doctest::Approx(w).epsilon(1e-12));
  }
  CHECK(std::abs(store.value(0).item() - 3.0) < 0.5);
}

TEST_CASE("adam rejects mismatched shapes") {
  ParamStore store;
  store.add("w", Tensor::vec({1.0, 2.0}));
  AdamState state = AdamState::init(store, 0.1);
  std::vector<Tensor> grads{Tensor::vec({1.0, 2.0, 3.0})};
  CHECK_THROWS_AS(adam_step(store, grads, state), DimError);
}

TEST_CASE("tape replay is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(123);
    Tape t;
    Var a = t.leaf(Tensor::randn({4, 4}, rng, 1.0), true);
    Var b = t.leaf(Tensor::randn({4, 4}, rng, 1.0));
    std::mt19937_64 drop(7);
    Var y = t.dropout(t.gelu(t.matmul(a, b)), 0.1, drop);
    return t.val(t.sum(y)).item();
  };
  const double first = run();
  const double second = run();
  CHECK(first == second);  // bit-identical
}

TEST_CASE("forward ops keep finite inputs finite") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Tape t;
    Var x = t.leaf(Tensor::randn({4, 8}, rng, 50.0));
    Var g = t.leaf(Tensor::full({8}, 1.0));
    Var b = t.leaf(Tensor::zeros({8}));
    CHECK(t.val(t.softmax_lastdim(x)).all_finite());
    CHECK(t.val(t.layer_norm(x, g, b)).all_finite());
    CHECK(t.val(t.gelu(x)).all_finite());
    CHECK(t.val(t.sigmoid(x)).all_finite());
  }
}

TEST_SUITE_END();
