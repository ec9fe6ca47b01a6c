#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "adgan/adam.hpp"
#include "adgan/matrix.hpp"
#include "adgan/params.hpp"
#include "adgan/rng.hpp"
#include "adgan/tape.hpp"
#include "test_support.hpp"

using namespace adgan;
using adgan::testing::central_fd;
using adgan::testing::max_grad_fd_err;
using adgan::testing::rel_err;

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

struct NetSpec {
  std::vector<int> widths;         // input, hidden..., output
  std::vector<int> activations;    // 0 = relu, 1 = sigmoid, per layer
};

ParameterSet random_net_params(const NetSpec& spec, Rng& rng) {
  ParameterSet ps;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    ps.add("w" + std::to_string(l), glorot(spec.widths[l], spec.widths[l + 1], rng));
    Matrix b(1, spec.widths[l + 1]);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-0.3, 0.3);
    ps.add("b" + std::to_string(l), b);
  }
  return ps;
}

// Builds the net on a tape; returns the scalar output node and records
// relu pre-activation node ids so kink-adjacent configurations can be
// filtered before finite differencing.
struct BuiltNet {
  Tape tape;
  int scalar = -1;
  std::vector<int> param_nodes;
  std::vector<std::string> param_names;
  std::vector<int> relu_preacts;
};

BuiltNet build_net(const NetSpec& spec, const ParameterSet& ps, const Matrix& x) {
  BuiltNet net;
  int h = net.tape.input(x);
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::string wn = "w" + std::to_string(l);
    const std::string bn = "b" + std::to_string(l);
    const int w = net.tape.param(ps.at(wn));
    const int b = net.tape.param(ps.at(bn));
    net.param_nodes.push_back(w);
    net.param_names.push_back(wn);
    net.param_nodes.push_back(b);
    net.param_names.push_back(bn);
    const int pre = net.tape.add_rowvec(net.tape.matmul(h, w), b);
    if (spec.activations[l] == 0) {
      net.relu_preacts.push_back(pre);
      h = net.tape.relu(pre);
    } else {
      h = net.tape.sigmoid(pre);
    }
  }
  net.scalar = net.tape.mean_all(h);
  return net;
}

double net_value(const NetSpec& spec, const ParameterSet& ps, const Matrix& x) {
  BuiltNet net = build_net(spec, ps, x);
  return net.tape.scalar_value(net.scalar);
}

bool kink_free(BuiltNet& net, double margin) {
  for (int pre : net.relu_preacts) {
    const Matrix& v = net.tape.value(pre);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::fabs(v.data()[i]) < margin) return false;
  }
  return true;
}

NetSpec random_spec(Rng& rng) {
  NetSpec spec;
  const int layers = 1 + rng.uniform_int(3);  // up to 3 layers
  spec.widths.push_back(2 + rng.uniform_int(5));
  for (int l = 0; l < layers; ++l) {
    spec.widths.push_back(1 + rng.uniform_int(8));
    spec.activations.push_back(rng.uniform_int(2));
  }
  return spec;
}

Matrix random_input(int rows, int cols, Rng& rng) {
  Matrix x(rows, cols);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.5, 1.5);
  return x;
}

}  // namespace

TEST_CASE("forward primitives match their definitions", "[diffnet]") {
  Tape t;
  SECTION("relu") {
    const int x = t.input(Matrix::row_vector({-1.0, 0.0, 2.0}));
    const int y = t.relu(x);
    CHECK(t.value(y) == Matrix::row_vector({0.0, 0.0, 2.0}));
  }
  SECTION("sigmoid at zero") {
    const int y = t.sigmoid(t.input(Matrix::scalar(0.0)));
    CHECK(t.value(y).at(0, 0) == 0.5);
  }
  SECTION("matmul dot product") {
    const int a = t.input(Matrix(1, 2, {1.0, 2.0}));
    const int b = t.input(Matrix(2, 1, {3.0, 4.0}));
    CHECK(t.value(t.matmul(a, b)).at(0, 0) == 11.0);
  }
  SECTION("matmul transpose variants agree with explicit transposition") {
    Rng rng(11);
    const Matrix a = random_input(3, 4, rng);
    const Matrix b = random_input(3, 5, rng);
    const int an = t.input(a);
    const int bn = t.input(b);
    const Matrix ref = matmul(a, b, true, false);
    CHECK(t.value(t.matmul(an, bn, true, false)) == ref);
  }
  SECTION("shape mismatch is rejected at build time") {
    const int a = t.input(Matrix(2, 3));
    const int b = t.input(Matrix(2, 3));
    CHECK_THROWS_AS(t.matmul(a, b), ValidationError);
  }
  SECTION("non-finite leaf is rejected") {
    CHECK_THROWS_AS(t.input(Matrix::scalar(std::numeric_limits<double>::infinity())),
                    NumericError);
  }
  SECTION("non-finite op output is rejected") {
    const int a = t.input(Matrix::scalar(1.0));
    const int b = t.input(Matrix::scalar(0.0));
    const int q = t.divide(a, b);
    CHECK_THROWS_AS(t.value(q), NumericError);
  }
}

TEST_CASE("scalar derivatives of activations", "[diffnet]") {
  SECTION("d sigmoid at 0 is 0.25") {
    Tape t;
    const int x = t.param(Matrix::scalar(0.0));
    const int y = t.sigmoid(x);
    const auto g = t.gradients(y, {x});
    CHECK(g[0].at(0, 0) == Catch::Approx(0.25).margin(1e-15));
  }
  SECTION("d relu at -1 is 0") {
    Tape t;
    const int x = t.param(Matrix::scalar(-1.0));
    const auto g = t.gradients(t.relu(x), {x});
    CHECK(g[0].at(0, 0) == 0.0);
  }
  SECTION("relu derivative at exactly 0 is defined as 0") {
    Tape t;
    const int x = t.param(Matrix::scalar(0.0));
    const auto g = t.gradients(t.relu(x), {x});
    CHECK(g[0].at(0, 0) == 0.0);
  }
}

TEST_CASE("three-layer net gradient matches finite differences", "[diffnet]") {
  Rng rng(42);
  NetSpec spec{{4, 6, 5, 1}, {0, 1, 0}};
  ParameterSet ps = random_net_params(spec, rng);
  const Matrix x = random_input(3, 4, rng);

  BuiltNet net = build_net(spec, ps, x);
  REQUIRE(kink_free(net, 1e-3));
  const auto grads = net.tape.gradients(net.scalar, net.param_nodes);

  std::vector<std::pair<std::string, Matrix>> named;
  for (std::size_t i = 0; i < grads.size(); ++i) named.emplace_back(net.param_names[i], grads[i]);
  const auto f = [&](const ParameterSet& p) { return net_value(spec, p, x); };
  CHECK(max_grad_fd_err(f, ps, named) < 1e-4);
}

TEST_CASE("fifty random small nets pass the gradient check", "[diffnet]") {
  Rng master(20260809);
  int tested = 0;
  std::uint64_t arch_seed = 1000;
  while (tested < 50) {
    ++arch_seed;
    Rng rng(arch_seed);
    NetSpec spec = random_spec(rng);
    ParameterSet ps = random_net_params(spec, rng);
    const Matrix x = random_input(2, spec.widths[0], rng);
    BuiltNet net = build_net(spec, ps, x);
    if (!kink_free(net, 1e-3)) continue;  // FD would straddle a relu kink
    const auto grads = net.tape.gradients(net.scalar, net.param_nodes);
    std::vector<std::pair<std::string, Matrix>> named;
    for (std::size_t i = 0; i < grads.size(); ++i)
      named.emplace_back(net.param_names[i], grads[i]);
    const auto f = [&](const ParameterSet& p) { return net_value(spec, p, x); };
    const double err = max_grad_fd_err(f, ps, named);
    INFO("arch seed " << arch_seed);
    REQUIRE(err < 1e-4);
    ++tested;
  }
  CHECK(tested == 50);
}

TEST_CASE("gradient is linear in the objective", "[diffnet]") {
  Rng rng(7);
  NetSpec spec{{3, 4, 1}, {1, 0}};
  ParameterSet ps = random_net_params(spec, rng);
  const Matrix x = random_input(2, 3, rng);

  // f and g share parameters on one tape; compare grad(a f + b g) with the
  // same combination of separate gradients.
  const double a = 1.7, b = -0.6;
  BuiltNet net = build_net(spec, ps, x);
  const int f_node = net.scalar;
  const int g_node = net.tape.sum_all(net.tape.sigmoid(f_node));
  const int combo = net.tape.lincomb(a, f_node, b, g_node);

  const auto gf = net.tape.gradients(f_node, net.param_nodes);
  const auto gg = net.tape.gradients(g_node, net.param_nodes);
  const auto gc = net.tape.gradients(combo, net.param_nodes);
  for (std::size_t i = 0; i < gc.size(); ++i) {
    for (int r = 0; r < gc[i].rows(); ++r)
      for (int c = 0; c < gc[i].cols(); ++c) {
        const double expect = a * gf[i].at(r, c) + b * gg[i].at(r, c);
        CHECK(rel_err(gc[i].at(r, c), expect, 1e-12) < 1e-12);
      }
  }
}

TEST_CASE("replay determinism is bit identical", "[diffnet]") {
  NetSpec spec{{5, 7, 3, 1}, {0, 0, 1}};
  auto run = [&]() {
    Rng rng(99);
    ParameterSet ps = random_net_params(spec, rng);
    const Matrix x = random_input(4, 5, rng);
    BuiltNet net = build_net(spec, ps, x);
    auto grads = net.tape.gradients(net.scalar, net.param_nodes);
    grads.push_back(net.tape.value(net.scalar));
    return grads;
  };
  const auto first = run();
  const auto second = run();
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("gradient penalty oracle cases", "[diffnet]") {
  SECTION("unit input gradient gives zero penalty") {
    Tape t;
    const int x = t.input(Matrix(3, 1, {0.3, -1.2, 5.0}));
    const int w = t.param(Matrix::scalar(1.0));
    const int critic = t.matmul(x, w);
    const auto pg = t.input_gradient_penalty(critic, x);
    CHECK(t.scalar_value(pg.penalty) == 0.0);
    CHECK(pg.zero_rows == 0);
  }
  SECTION("linear critic D(x)=2x has penalty 1 independent of x") {
    for (double xv : {-4.0, 0.5, 100.0}) {
      Tape t;
      const int x = t.input(Matrix(2, 1, {xv, xv + 1.0}));
      const int w = t.param(Matrix::scalar(2.0));
      const auto pg = t.input_gradient_penalty(t.matmul(x, w), x);
      CHECK(t.scalar_value(pg.penalty) == Catch::Approx(1.0).margin(1e-15));
    }
  }
  SECTION("multivariate linear critic: penalty (||a||-1)^2 and analytic parameter gradient") {
    // D(x) = a^T x. The penalty is (||a||_2 - 1)^2 exactly, with gradient
    // 2 (||a|| - 1) a / ||a||.
    Tape t;
    const Matrix a_val(3, 1, {0.4, -1.1, 2.2});
    Rng rng(3);
    const int x = t.input(random_input(5, 3, rng));
    const int a = t.param(a_val);
    const auto pg = t.input_gradient_penalty(t.matmul(x, a), x);
    double norm = 0.0;
    for (int i = 0; i < 3; ++i) norm += a_val.at(i, 0) * a_val.at(i, 0);
    norm = std::sqrt(norm);
    CHECK(std::fabs(t.scalar_value(pg.penalty) - (norm - 1.0) * (norm - 1.0)) < 1e-10);
    const auto grads = t.gradients(pg.penalty, {a});
    for (int i = 0; i < 3; ++i) {
      const double expect = 2.0 * (norm - 1.0) * a_val.at(i, 0) / norm;
      CHECK(std::fabs(grads[0].at(i, 0) - expect) < 1e-10);
    }
  }
  SECTION("zero input gradient is flagged and contributes penalty 1 with zero parameter gradient") {
    Tape t;
    const int x = t.input(Matrix(3, 2, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    const int w = t.param(Matrix(2, 1));  // all-zero weights
    const auto pg = t.input_gradient_penalty(t.matmul(x, w), x);
    CHECK(pg.zero_rows == 3);
    CHECK(t.scalar_value(pg.penalty) == 1.0);
    const auto grads = t.gradients(pg.penalty, {w});
    for (std::size_t i = 0; i < grads[0].size(); ++i) CHECK(grads[0].data()[i] == 0.0);
  }
}

TEST_CASE("penalty parameter gradient matches finite differences on a two-layer critic",
          "[diffnet]") {
  Rng rng(314);
  ParameterSet ps;
  ps.add("w0", glorot(4, 6, rng));
  ps.add("b0", glorot(1, 6, rng));
  ps.add("w1", glorot(6, 1, rng));
  ps.add("b1", glorot(1, 1, rng));
  const Matrix x = random_input(3, 4, rng);

  struct Built {
    Tape tape;
    int penalty;
    std::vector<int> nodes;
  };
  const auto build = [&](const ParameterSet& p) {
    Built bl;
    const int xn = bl.tape.input(x);
    const int w0 = bl.tape.param(p.at("w0"));
    const int b0 = bl.tape.param(p.at("b0"));
    const int w1 = bl.tape.param(p.at("w1"));
    const int b1 = bl.tape.param(p.at("b1"));
    bl.nodes = {w0, b0, w1, b1};
    const int h = bl.tape.relu(bl.tape.add_rowvec(bl.tape.matmul(xn, w0), b0));
    const int critic = bl.tape.add_rowvec(bl.tape.matmul(h, w1), b1);
    bl.penalty = bl.tape.input_gradient_penalty(critic, xn).penalty;
    return bl;
  };

  Built bl = build(ps);
  const auto grads = bl.tape.gradients(bl.penalty, bl.nodes);
  const std::vector<std::string> names = {"w0", "b0", "w1", "b1"};
  std::vector<std::pair<std::string, Matrix>> named;
  for (std::size_t i = 0; i < names.size(); ++i) named.emplace_back(names[i], grads[i]);
  const auto f = [&](const ParameterSet& p) {
    Built b2 = build(p);
    return b2.tape.scalar_value(b2.penalty);
  };
  CHECK(max_grad_fd_err(f, ps, named) < 1e-3);
}

TEST_CASE("fifty random nets pass the second-order penalty gradient check", "[diffnet]") {
  int tested = 0;
  std::uint64_t arch_seed = 5000;
  while (tested < 50) {
    ++arch_seed;
    Rng rng(arch_seed);
    const int in_dim = 2 + rng.uniform_int(4);
    const int hid = 2 + rng.uniform_int(6);
    ParameterSet ps;
    ps.add("w0", glorot(in_dim, hid, rng));
    ps.add("b0", glorot(1, hid, rng));
    ps.add("w1", glorot(hid, 1, rng));
    const Matrix x = random_input(2, in_dim, rng);

    struct Built {
      Tape tape;
      int penalty;
      std::vector<int> nodes;
      int preact;
    };
    const auto build = [&](const ParameterSet& p) {
      Built bl;
      const int xn = bl.tape.input(x);
      const int w0 = bl.tape.param(p.at("w0"));
      const int b0 = bl.tape.param(p.at("b0"));
      const int w1 = bl.tape.param(p.at("w1"));
      bl.nodes = {w0, b0, w1};
      bl.preact = bl.tape.add_rowvec(bl.tape.matmul(xn, w0), b0);
      bl.penalty =
          bl.tape.input_gradient_penalty(bl.tape.matmul(bl.tape.relu(bl.preact), w1), xn).penalty;
      return bl;
    };
    Built bl = build(ps);
    const Matrix& pre = bl.tape.value(bl.preact);
    bool kinky = false;
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (std::fabs(pre.data()[i]) < 1e-3) kinky = true;
    if (kinky) continue;

    const auto grads = bl.tape.gradients(bl.penalty, bl.nodes);
    const std::vector<std::string> names = {"w0", "b0", "w1"};
    std::vector<std::pair<std::string, Matrix>> named;
    for (std::size_t i = 0; i < names.size(); ++i) named.emplace_back(names[i], grads[i]);
    const auto f = [&](const ParameterSet& p) {
      Built b2 = build(p);
      return b2.tape.scalar_value(b2.penalty);
    };
    INFO("arch seed " << arch_seed);
    REQUIRE(max_grad_fd_err(f, ps, named) < 1e-3);
    ++tested;
  }
}

TEST_CASE("adam update rule", "[diffnet]") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParameterSet ps;
    ps.add("w", Matrix(2, 2, {1.0, -2.0, 3.0, 4.0}));
    const Matrix before = ps.at("w");
    AdamState adam(0.1, 0.9, 0.999);
    adam.step(ps, {{"w", Matrix(2, 2)}});
    CHECK(ps.at("w") == before);
    CHECK(adam.step_count() == 1);
  }
  SECTION("first step moves by about -lr * sign(g)") {
    ParameterSet ps;
    ps.add("w", Matrix(1, 3, {0.0, 0.0, 0.0}));
    AdamState adam(0.05, 0.9, 0.999);
    adam.step(ps, {{"w", Matrix(1, 3, {0.2, -3.0, 1e-3})}});
    for (int c = 0; c < 3; ++c) {
      const double sign = c == 1 ? 1.0 : -1.0;
      CHECK(ps.at("w").at(0, c) == Catch::Approx(sign * 0.05).epsilon(0.01));
    }
  }
  SECTION("descends a scalar quadratic") {
    // Oracle: run the recurrence itself; minimizing (w-3)^2 from 0.
    ParameterSet ps;
    ps.add("w", Matrix::scalar(0.0));
    AdamState adam(0.1, 0.9, 0.999);
    for (int i = 0; i < 100; ++i) {
      const double w = ps.at("w").at(0, 0);
      adam.step(ps, {{"w", Matrix::scalar(2.0 * (w - 3.0))}});
    }
    CHECK(std::fabs(ps.at("w").at(0, 0) - 3.0) < 0.1);
  }
  SECTION("rejects shape mismatch and non-finite gradients") {
    ParameterSet ps;
    ps.add("w", Matrix(2, 2));
    AdamState adam(0.1, 0.9, 0.999);
    CHECK_THROWS_AS(adam.step(ps, {{"w", Matrix(1, 2)}}), ValidationError);
    CHECK_THROWS_AS(adam.step(ps, {{"w", Matrix(2, 2, {1.0, 2.0, 3.0, std::nan("")})}}),
                    NumericError);
  }
}
