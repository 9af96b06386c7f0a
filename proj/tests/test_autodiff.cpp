#include <gtest/gtest.h>

#include <cmath>

#include "scoregrad/autodiff.hpp"
#include "scoregrad/errors.hpp"
#include "scoregrad/grad_check.hpp"
#include "scoregrad/rng.hpp"

using namespace scoregrad;

namespace {

// Direct zero-padded dilated convolution, one output at a time.
Tensor reference_conv(const Tensor& x, const Tensor& w, std::size_t dilation) {
  const std::size_t c_in = x.dim(0), len = x.dim(1), c_out = w.dim(0), k = w.dim(2);
  Tensor out({c_out, len});
  const auto half = static_cast<long>(k / 2);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      double acc = 0.0;
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(l) + (static_cast<long>(j) - half) *
                                                      static_cast<long>(dilation);
          if (src < 0 || src >= static_cast<long>(len)) continue;
          acc += w[(o * c_in + c) * k + j] * x[c * len + static_cast<std::size_t>(src)];
        }
      }
      out[o * len + l] = acc;
    }
  }
  return out;
}

}  // namespace

TEST(Tensor, ShapeMismatchOnConstruction) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_EQ(Tensor({2, 3}).size(), 6u);
}

TEST(Ops, MatmulIdentity) {
  Tape tape(GradMode::kInference);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor v = Tensor::vector({0.3, -2.0, 7.5});
  EXPECT_EQ(ops::matmul(tape.constant(eye), tape.constant(v)).value(), v);
}

TEST(Ops, SigmoidValueAndDerivative) {
  Parameter p("p", Tensor::vector({0.0}));
  Tape tape;
  Var y = ops::sigmoid(tape.parameter(p));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  tape.backward(ops::sum(y));
  EXPECT_DOUBLE_EQ(p.grad()[0], 0.25);
}

TEST(Ops, Conv1dDilatedOnes) {
  Tape tape(GradMode::kInference);
  Var x = tape.constant(Tensor({1, 8}, 1.0));
  Var w = tape.constant(Tensor({1, 1, 3}, 1.0));
  const Tensor y = ops::conv1d(x, w, std::nullopt, 2).value();
  for (std::size_t l = 0; l < 8; ++l) {
    EXPECT_DOUBLE_EQ(y[l], (l < 2 || l >= 6) ? 2.0 : 3.0) << "position " << l;
  }
}

TEST(Ops, Conv1dMatchesDirectLoop) {
  RngStream rng(4);
  for (std::size_t dilation : {1, 2, 3, 8}) {
    const Tensor x = rng.normal({3, 11});
    const Tensor w = rng.normal({5, 3, 3});
    Tape tape(GradMode::kInference);
    const Tensor y = ops::conv1d(tape.constant(x), tape.constant(w), std::nullopt, dilation).value();
    const Tensor expected = reference_conv(x, w, dilation);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
  }
}

TEST(Ops, ShapeErrorsNameOpAndShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 2}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ops::add(a, b), ShapeError);
  EXPECT_THROW(ops::conv1d(a, tape.constant(Tensor({1, 3, 3})), std::nullopt, 1), ShapeError);
  EXPECT_THROW(ops::conv1d(a, tape.constant(Tensor({1, 2, 3})), std::nullopt, 0), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  Parameter p("p", Tensor::vector({1.0, -3.0, 2.5}));
  Tape tape;
  tape.backward(ops::sum(tape.parameter(p)));
  for (double g : p.grad().data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareNorm) {
  Parameter p("p", Tensor::vector({1.0, 2.0}));
  Tape tape;
  tape.backward(ops::square_norm(tape.parameter(p)));
  EXPECT_EQ(p.grad()[0], 2.0);
  EXPECT_EQ(p.grad()[1], 4.0);
}

TEST(Backward, RejectsNonScalarRootAndSecondPass) {
  Parameter p("p", Tensor::vector({1.0, 2.0}));
  Tape tape;
  Var x = tape.parameter(p);
  EXPECT_THROW(tape.backward(x), ShapeError);
  Var s = ops::sum(x);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), Error);
  Tape inference(GradMode::kInference);
  EXPECT_THROW(inference.backward(ops::sum(inference.parameter(p))), Error);
}

TEST(Backward, ParameterUsedTwiceAccumulates) {
  RngStream rng(3);
  Parameter p("p", rng.normal({4}));
  Parameter q("q", rng.normal({4}));
  auto single = [&](bool first) {
    p.zero_grad();
    Tape tape;
    Var x = tape.parameter(p);
    Var y = first ? ops::tanh(ops::mul(x, tape.parameter(q))) : ops::sigmoid(x);
    tape.backward(ops::sum(y));
    return p.grad();
  };
  const Tensor g1 = single(true);
  const Tensor g2 = single(false);
  p.zero_grad();
  Tape tape;
  Var x = tape.parameter(p);
  Var y = ops::add(ops::tanh(ops::mul(x, tape.parameter(q))), ops::sigmoid(x));
  tape.backward(ops::sum(y));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.grad()[i], g1[i] + g2[i], 1e-14);
}

TEST(GradCheck, IdentityAndTanh) {
  EXPECT_LT(grad_check([](Tape&, const Var& x) { return x; }, Tensor::vector({0.4})), 1e-9);
  EXPECT_LT(grad_check([](Tape&, const Var& x) { return ops::tanh(x); }, Tensor::vector({0.3})),
            1e-6);
}

TEST(GradCheck, EveryOpAtSeededPoints) {
  using Fn = std::function<Var(Tape&, const Var&)>;
  struct Case {
    const char* name;
    Shape shape;
    Fn fn;
  };
  RngStream aux(17);
  const Tensor m34 = aux.normal({3, 4});
  const Tensor v4 = aux.normal({4});
  const Tensor m23 = aux.normal({2, 3});
  const Tensor kernel = aux.normal({3, 2, 3});
  const Tensor input = aux.normal({2, 2, 7});
  const std::vector<Case> cases = {
      {"matmul_left", {2, 3}, [&](Tape& t, const Var& x) { return ops::matmul(x, t.constant(m34)); }},
      {"matmul_right", {3, 4}, [&](Tape& t, const Var& x) { return ops::matmul(t.constant(m23), x); }},
      {"matmul_vec", {4}, [&](Tape& t, const Var& x) { return ops::matmul(t.constant(m34), x); }},
      {"add", {4}, [&](Tape& t, const Var& x) { return ops::add(x, ops::mul(x, t.constant(v4))); }},
      {"sub", {4}, [&](Tape& t, const Var& x) { return ops::sub(t.constant(v4), ops::tanh(x)); }},
      {"mul", {4}, [](Tape&, const Var& x) { return ops::mul(x, x); }},
      {"scale", {4}, [](Tape&, const Var& x) { return ops::scale(ops::add_scalar(x, 1.5), -0.7); }},
      {"add_bias", {4}, [&](Tape& t, const Var& x) { return ops::add_bias(t.constant(m34), x); }},
      {"conv_input", {2, 2, 7},
       [&](Tape& t, const Var& x) { return ops::conv1d(x, t.constant(kernel), std::nullopt, 2); }},
      {"conv_kernel", {3, 2, 3},
       [&](Tape& t, const Var& w) { return ops::conv1d(t.constant(input), w, std::nullopt, 3); }},
      {"conv_bias", {3},
       [&](Tape& t, const Var& b) {
         return ops::conv1d(t.constant(input), t.constant(kernel), b, 1);
       }},
      {"expand_last", {2, 3}, [](Tape&, const Var& x) { return ops::tanh(ops::expand_last(x, 5)); }},
      {"reshape", {2, 3}, [](Tape&, const Var& x) { return ops::sigmoid(ops::reshape(x, {3, 2})); }},
      {"concat", {2, 3},
       [&](Tape& t, const Var& x) {
         const Var parts[] = {x, t.constant(m23), ops::tanh(x)};
         return ops::concat(parts, 1);
       }},
      {"concat0", {2, 3},
       [&](Tape& t, const Var& x) {
         const Var parts[] = {ops::tanh(x), t.constant(m23)};
         return ops::concat(parts, 0);
       }},
      {"slice", {2, 6}, [](Tape&, const Var& x) { return ops::slice(x, 1, 2, 5); }},
      {"sigmoid", {4}, [](Tape&, const Var& x) { return ops::sigmoid(x); }},
      {"tanh", {4}, [](Tape&, const Var& x) { return ops::tanh(x); }},
      {"softplus", {4}, [](Tape&, const Var& x) { return ops::softplus(x); }},
      {"sum", {4}, [](Tape&, const Var& x) { return ops::sum(ops::mul(x, x)); }},
      {"mean", {2, 3}, [](Tape&, const Var& x) { return ops::mean(ops::tanh(x)); }},
      {"square_norm", {4}, [](Tape&, const Var& x) { return ops::square_norm(x); }},
  };
  for (const Case& c : cases) {
    RngStream rng(100);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor point = rng.normal(c.shape);
      EXPECT_LT(grad_check(c.fn, point), 1e-4) << c.name << " trial " << trial;
    }
  }
}

TEST(Determinism, ForwardAndBackwardBitIdentical) {
  auto run = [] {
    RngStream rng(9);
    Parameter w("w", rng.normal({4, 1, 3}));
    Parameter x("x", rng.normal({2, 1, 6}));
    Tape tape;
    Var y = ops::conv1d(tape.parameter(x), tape.parameter(w), std::nullopt, 2);
    Var loss = ops::square_norm(ops::tanh(y));
    tape.backward(loss);
    return std::make_pair(loss.value().item(), w.grad());
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Rng, SeedDeterminismAndSplit) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(RngStream(42).next_u64(), RngStream(43).next_u64());
  RngStream s1 = a.split(1), s2 = a.split(2);
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  // Moments of the normal generator.
  RngStream r(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}
