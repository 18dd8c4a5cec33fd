#include <cmath>
#include <random>

#include "doctest.h"
#include "rxl/grad/ops.hpp"
#include "rxl/grad/optim.hpp"
#include "support/finite_diff.hpp"

using namespace rxl::grad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Reduces any tensor to a scalar with fixed random weights so every output element matters.
Var weighted_sum(Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(x.shape(), rng);
  return dot(x, x.tape()->constant(std::move(w)));
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var y = softmax(t.constant(Tensor::vector({0, 0, 0})));
  for (double v : y.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("identity matmul and analytic fixed points") {
  std::mt19937_64 rng(3);
  Tape t;
  Tensor a = random_tensor(Shape{3, 5}, rng);
  Var y = matmul(t.constant(Tensor::identity(3)), t.constant(a));
  CHECK(y.value() == a);
  CHECK(sigmoid(t.constant(Tensor::scalar(0.0))).item() == 0.5);
  CHECK(tanh(t.constant(Tensor::scalar(0.0))).item() == 0.0);
}

TEST_CASE("backward of x*x at 3 is 6") {
  ParameterSet ps;
  Parameter& x = ps.add("x", Tensor::scalar(3.0));
  Tape t;
  Var v = t.param(x);
  Gradients g = t.backward(mul(v, v));
  CHECK(g.get(x).item() == doctest::Approx(6.0));
}

TEST_CASE("gradient of sum(softmax(z)) vanishes") {
  ParameterSet ps;
  std::mt19937_64 rng(5);
  Parameter& z = ps.add("z", random_tensor(Shape{6}, rng, -3, 3));
  Tape t;
  Gradients g = t.backward(sum(softmax(t.param(z))));
  const Tensor gz = g.get(z);
  for (double v : gz.values()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
  Tape t;
  Var a = t.constant(Tensor(Shape{2, 3}));
  Var b = t.constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, t.constant(Tensor(Shape{3, 2}))), ShapeError);
}

TEST_CASE("non-finite inputs are rejected") {
  Tape t;
  CHECK_THROWS_AS(t.constant(Tensor::vector({1.0, std::nan("")})), NonFiniteError);
  Var neg1 = t.constant(Tensor::scalar(-1.0));
  CHECK_THROWS_AS(log(neg1), NonFiniteError);
  CHECK_THROWS_AS(exp(t.constant(Tensor::scalar(1e6))), NonFiniteError);
}

TEST_CASE("backward rejects a root from another tape or a non-scalar root") {
  Tape a, b;
  Var x = a.constant(Tensor::scalar(1.0));
  CHECK_THROWS_AS(b.backward(x), GradError);
  Var v = a.constant(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(a.backward(v), ShapeError);
}

TEST_CASE("every primitive matches central finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterSet ps;
    Parameter& A = ps.add("A", random_tensor(Shape{4, 3}, rng));
    Parameter& B = ps.add("B", random_tensor(Shape{3, 5}, rng));
    Parameter& x = ps.add("x", random_tensor(Shape{3}, rng));
    Parameter& y = ps.add("y", random_tensor(Shape{4}, rng));
    Parameter& p = ps.add("p", random_tensor(Shape{4}, rng, 0.5, 2.0));
    Parameter& s = ps.add("s", random_tensor(Shape{1}, rng));
    Parameter& E = ps.add("E", random_tensor(Shape{6, 3}, rng));
    const std::uint64_t seed = rng();

    using Builder = std::function<Var(Tape&)>;
    std::vector<std::pair<const char*, Builder>> cases = {
        {"matmul", [&](Tape& t) { return weighted_sum(matmul(t.param(A), t.param(B)), seed); }},
        {"matvec", [&](Tape& t) { return weighted_sum(matmul(t.param(A), t.param(x)), seed); }},
        {"transpose", [&](Tape& t) { return weighted_sum(transpose(t.param(A)), seed); }},
        {"add", [&](Tape& t) { return weighted_sum(add(t.param(y), t.param(p)), seed); }},
        {"sub", [&](Tape& t) { return weighted_sum(sub(t.param(y), t.param(p)), seed); }},
        {"mul", [&](Tape& t) { return weighted_sum(mul(t.param(y), t.param(p)), seed); }},
        {"mul_self", [&](Tape& t) { return weighted_sum(mul(t.param(y), t.param(y)), seed); }},
        {"mul_scalar", [&](Tape& t) { return weighted_sum(mul_scalar(t.param(A), t.param(s)), seed); }},
        {"sigmoid", [&](Tape& t) { return weighted_sum(sigmoid(t.param(A)), seed); }},
        {"tanh", [&](Tape& t) { return weighted_sum(tanh(t.param(A)), seed); }},
        {"exp", [&](Tape& t) { return weighted_sum(exp(t.param(A)), seed); }},
        {"log", [&](Tape& t) { return weighted_sum(log(t.param(p)), seed); }},
        {"softmax", [&](Tape& t) { return weighted_sum(softmax(t.param(A)), seed); }},
        {"log_softmax", [&](Tape& t) { return weighted_sum(log_softmax(t.param(y)), seed); }},
        {"concat", [&](Tape& t) { return weighted_sum(concat({t.param(x), t.param(y)}), seed); }},
        {"concat_cols",
         [&](Tape& t) { return weighted_sum(concat_cols({t.param(A), t.param(y), t.param(A)}), seed); }},
        {"slice", [&](Tape& t) { return weighted_sum(slice(t.param(y), 1, 3), seed); }},
        {"slice_cols", [&](Tape& t) { return weighted_sum(slice_cols(t.param(B), 2, 5), seed); }},
        {"add_colwise", [&](Tape& t) { return weighted_sum(add_colwise(t.param(A), t.param(y)), seed); }},
        {"add_rowwise", [&](Tape& t) { return weighted_sum(add_rowwise(t.param(A), t.param(x)), seed); }},
        {"sum_mean", [&](Tape& t) { return add(sum(t.param(A)), mean(mul(t.param(B), t.param(B)))); }},
        {"lookup", [&](Tape& t) { return weighted_sum(lookup(t.param(E), 4), seed); }},
        {"pick", [&](Tape& t) { return mul(pick(t.param(y), 2), pick(t.param(y), 2)); }},
        {"add_n", [&](Tape& t) { return weighted_sum(add_n({t.param(y), t.param(p), t.param(y)}), seed); }},
        {"reshape", [&](Tape& t) { return weighted_sum(reshape(t.param(A), Shape{12}), seed); }},
    };
    for (auto& [name, build] : cases) {
      CAPTURE(name);
      auto report = rxl::testing::check_gradients(ps, build);
      CHECK(report.worst() < 1e-4);
    }
  }
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    Tape t;
    Var y = softmax(t.constant(random_tensor(Shape{3, 7}, rng, -20, 20)));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y.value().at(r, j) >= 0.0);
        s += y.value().at(r, j);
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("repeated backward passes are bitwise identical") {
  std::mt19937_64 rng(9);
  ParameterSet ps;
  Parameter& W = ps.add("W", random_tensor(Shape{5, 5}, rng));
  Parameter& v = ps.add("v", random_tensor(Shape{5}, rng));
  Tape t;
  Var h = tanh(matmul(t.param(W), t.param(v)));
  Var root = sum(log_softmax(matmul(t.param(W), h)));
  Gradients g1 = t.backward(root);
  Gradients g2 = t.backward(root);
  CHECK(g1.get(W) == g2.get(W));
  CHECK(g1.get(v) == g2.get(v));
}

TEST_CASE("non-participating parameters receive zero gradient") {
  ParameterSet ps;
  Parameter& a = ps.add("a", Tensor::scalar(2.0));
  Parameter& b = ps.add("b", Tensor::vector({1.0, 2.0}));
  Tape t;
  Gradients g = t.backward(mul(t.param(a), t.param(a)));
  CHECK(g.find(b) == nullptr);
  CHECK(g.get(b) == Tensor(b.value().shape()));
}

TEST_CASE("NLL of a 2-token sequence matches finite differences") {
  std::mt19937_64 rng(17);
  ParameterSet ps;
  Parameter& emb = ps.add("emb", random_tensor(Shape{4, 3}, rng));
  Parameter& out = ps.add("out", random_tensor(Shape{4, 3}, rng));
  const std::size_t tokens[] = {2, 1};
  auto nll = [&](Tape& t) {
    std::vector<Var> terms;
    std::size_t prev = 0;
    for (std::size_t tok : tokens) {
      Var h = tanh(lookup(t.param(emb), prev));
      terms.push_back(pick(log_softmax(matmul(t.param(out), h)), tok));
      prev = tok;
    }
    return neg(add_n(terms));
  };
  auto report = rxl::testing::check_gradients(ps, nll);
  CHECK(report.worst() < 1e-5);
}

TEST_CASE("optimizer steps") {
  SUBCASE("sgd follows p - lr*g exactly") {
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor::scalar(1.0));
    Gradients g;
    g.accumulate(p, Tensor::scalar(2.0));
    Optimizer opt({OptimizerConfig::Kind::kSgd, 0.1});
    opt.step(ps, g);
    CHECK(p.value().item() == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    for (auto kind : {OptimizerConfig::Kind::kSgd, OptimizerConfig::Kind::kAdam}) {
      ParameterSet ps;
      Parameter& p = ps.add("p", Tensor::vector({1.0, -2.0}));
      Gradients g;
      g.accumulate(p, Tensor::vector({0.0, 0.0}));
      OptimizerConfig cfg;
      cfg.kind = kind;
      Optimizer opt(cfg);
      opt.step(ps, g);
      CHECK(p.value() == Tensor::vector({1.0, -2.0}));
    }
  }
  SUBCASE("first adam step moves by about lr regardless of gradient scale") {
    // At t=1: mhat = g, vhat = g^2, so the update is lr * g / (|g| + eps).
    for (double scale : {1e-3, 1.0, 1e3}) {
      ParameterSet ps;
      Parameter& p = ps.add("p", Tensor::vector({0.0, 0.0, 0.0}));
      Gradients g;
      g.accumulate(p, Tensor::vector({scale, scale, scale}));
      OptimizerConfig cfg;
      Optimizer opt(cfg);
      opt.step(ps, g);
      const double expected = -cfg.learning_rate * scale / (scale + cfg.epsilon);
      for (double v : p.value().values()) {
        CHECK(v == doctest::Approx(expected).epsilon(1e-12));
        CHECK(std::abs(std::abs(v) - cfg.learning_rate) < 1e-7 * 1e3);
      }
    }
  }
  SUBCASE("non-finite gradient names the parameter") {
    ParameterSet ps;
    Parameter& p = ps.add("weights", Tensor::scalar(1.0));
    Gradients g;
    g.accumulate(p, Tensor::scalar(std::numeric_limits<double>::infinity()));
    Optimizer opt({});
    try {
      opt.step(ps, g);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }
  }
}
