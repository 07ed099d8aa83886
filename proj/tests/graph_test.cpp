#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spsb/error.hpp"
#include "spsb/graph.hpp"

namespace spsb::graph {
namespace {

using Builder = std::function<Var(Tape&)>;

double forward_loss(const Builder& build) {
  Tape tape;
  return tape.value(build(tape))[0];
}

// Central-difference gradient of the scalar built by `build` with respect
// to every entry of `p`.
std::vector<double> numeric_gradient(Parameter& p, const Builder& build, double h = 1e-5) {
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p.values()[i];
    p.values()[i] = keep + h;
    const double up = forward_loss(build);
    p.values()[i] = keep - h;
    const double down = forward_loss(build);
    p.values()[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void expect_close(std::span<const double> analytic, std::span<const double> numeric, double rel,
                  const std::string& what) {
  ASSERT_EQ(analytic.size(), numeric.size()) << what;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    EXPECT_LE(std::abs(analytic[i] - numeric[i]), rel * scale + 1e-9)
        << what << " entry " << i << ": " << analytic[i] << " vs " << numeric[i];
  }
}

Parameter random_parameter(const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
  const std::size_t n = element_count(shape);
  return Parameter(name, Tensor(std::move(shape), testing::random_vector(n, -scale, scale, rng)));
}

std::vector<double> one_hot_rows(std::size_t rows, std::size_t classes, Rng& rng) {
  std::vector<double> y(rows * classes, 0.0);
  for (std::size_t r = 0; r < rows; ++r) y[r * classes + rng() % classes] = 1.0;
  return y;
}

TEST(Dense, HandExample) {
  Tape tape;
  const auto x = tape.constant(Tensor::vector({3.0, 4.0}));
  const auto w = tape.constant(Tensor({1, 2}, {1.0, 2.0}));
  const auto b = tape.constant(Tensor::vector({0.0}));
  const auto y = dense(tape, x, w, b);
  ASSERT_EQ(tape.value(y).size(), 1u);
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 11.0);
}

TEST(Dense, WeightGradientIsOuterProduct) {
  Parameter w("w", Tensor({1, 2}, {1.0, 2.0}));
  Tape tape;
  const auto y = dense(tape, tape.constant(Tensor::vector({3.0, 4.0})), tape.parameter(w),
                       tape.constant(Tensor::vector({0.0})));
  const auto grads = tape.backward(y);
  EXPECT_EQ(grads.of(w), (std::vector<double>{3.0, 4.0}));
}

TEST(Tape, IdentityHasOneNode) {
  Tape tape;
  const auto x = tape.constant(Tensor::vector({1.5, -2.0}));
  const auto y = identity(tape, x);
  EXPECT_EQ(tape.size(), 1u);
  EXPECT_EQ(tape.op_name(0), "identity");
  EXPECT_EQ(std::vector<double>(tape.value(y).values().begin(), tape.value(y).values().end()),
            (std::vector<double>{1.5, -2.0}));
}

TEST(Tape, BackwardRunsOnce) {
  Parameter p("p", Tensor::vector({0.3}));
  Tape tape;
  const auto y = sigmoid(tape, tape.parameter(p));
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), UsageError);
  EXPECT_THROW(identity(tape, y), UsageError);
}

TEST(Tape, ForeignVariableIsRejected) {
  Tape a, b;
  const auto x = a.constant(Tensor::vector({1.0, 2.0, 3.0}));
  b.constant(Tensor::scalar(0.0));
  EXPECT_THROW(b.value(Var{x.id + 5}), InvariantError);
}

TEST(Sigmoid, SlopeAtZero) {
  Parameter p("p", Tensor::vector({0.0}));
  Tape tape;
  const auto y = sigmoid(tape, tape.parameter(p));
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 0.5);
  EXPECT_DOUBLE_EQ(tape.backward(y).of(p)[0], 0.25);
}

TEST(Softmax, SymmetricLogits) {
  Tape tape;
  const auto q = softmax(tape, tape.constant(Tensor::vector({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(tape.value(q)[0], 0.5);
  EXPECT_DOUBLE_EQ(tape.value(q)[1], 0.5);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tape tape;
  const auto q = softmax(tape, tape.constant(Tensor::vector({1000.0, 0.0})));
  EXPECT_DOUBLE_EQ(tape.value(q)[0], 1.0);
  EXPECT_TRUE(std::isfinite(tape.value(q)[1]));
}

TEST(Bce, HalfProbability) {
  Tape tape;
  const auto l = bce_loss(tape, tape.constant(Tensor::vector({0.5})), tape.constant(Tensor::vector({1.0})));
  EXPECT_NEAR(tape.value(l)[0], std::log(2.0), 1e-15);
}

TEST(Bce, ClipsSaturatedProbability) {
  Tape tape;
  const auto l = bce_loss(tape, tape.constant(Tensor::vector({1e-9})), tape.constant(Tensor::vector({1.0})));
  EXPECT_NEAR(tape.value(l)[0], -std::log(1e-7), 1e-12);
  EXPECT_NEAR(tape.value(l)[0], 16.118, 1e-3);
}

TEST(Bce, RejectsNonBinaryLabels) {
  Tape tape;
  EXPECT_THROW(bce_loss(tape, tape.constant(Tensor::vector({0.5})), tape.constant(Tensor::vector({2.0}))),
               DataError);
}

TEST(CrossEntropy, RejectsNonOneHotRows) {
  Tape tape;
  const auto q = tape.constant(Tensor::vector({0.5, 0.5}));
  EXPECT_THROW(cross_entropy(tape, q, tape.constant(Tensor::vector({1.0, 1.0}))), DataError);
  EXPECT_THROW(cross_entropy(tape, q, tape.constant(Tensor::vector({0.5, 0.5}))), DataError);
}

TEST(CrossEntropy, Value) {
  Tape tape;
  const auto l = cross_entropy(tape, tape.constant(Tensor::vector({0.25, 0.75})),
                               tape.constant(Tensor::vector({0.0, 1.0})));
  EXPECT_NEAR(tape.value(l)[0], -std::log(0.75), 1e-15);
}

TEST(Ops, ShapeMismatchIsAnInvariantError) {
  Tape tape;
  const auto x = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
  const auto w = tape.constant(Tensor({1, 2}, {1.0, 2.0}));
  const auto b = tape.constant(Tensor::vector({0.0}));
  EXPECT_THROW(dense(tape, x, w, b), InvariantError);
  EXPECT_THROW(select(tape, x, 3), InvariantError);
}

// Randomised composite graphs, each checked against central differences.
class ClassicalGradients : public ::testing::TestWithParam<int> {};

TEST_P(ClassicalGradients, MatchCentralDifferences) {
  const int shape_kind = GetParam() % 5;
  Rng rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 13);

  std::size_t in = 2 + rng() % 4;
  std::size_t hidden = 2 + rng() % 3;
  std::size_t batch = 1 + rng() % 4;
  auto w1 = random_parameter("w1", {hidden, in}, rng);
  auto b1 = random_parameter("b1", {hidden}, rng);
  auto w2 = random_parameter("w2", {2, hidden}, rng);
  auto b2 = random_parameter("b2", {2}, rng);
  auto w3 = random_parameter("w3", {2, 2 * hidden}, rng);
  const auto x = testing::random_vector(batch * in, -1.5, 1.5, rng);
  const auto x1 = std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(in));
  const auto y2 = one_hot_rows(batch, 2, rng);
  const double y = static_cast<double>(rng() % 2);
  const std::size_t pick = rng() % hidden;
  const double scale = uniform(rng, -2, 2);
  const double shift = uniform(rng, -1, 1);

  Builder build;
  std::vector<Parameter*> params;
  switch (shape_kind) {
    case 0:  // dense -> sigmoid -> select -> bce
      build = [&](Tape& t) {
        auto h = sigmoid(t, dense(t, t.constant(Tensor::vector(x1)), t.parameter(w1), t.parameter(b1)));
        return bce_loss(t, select(t, h, pick), t.constant(Tensor::vector({y})));
      };
      params = {&w1, &b1};
      break;
    case 1:  // batched dense -> softmax -> cross entropy
      build = [&](Tape& t) {
        auto xs = t.constant(Tensor({batch, in}, x));
        auto h = dense(t, xs, t.parameter(w1), t.parameter(b1));
        auto logits = dense(t, h, t.parameter(w2), t.parameter(b2));
        return cross_entropy(t, softmax(t, logits), t.constant(Tensor({batch, 2}, y2)));
      };
      params = {&w1, &b1, &w2, &b2};
      break;
    case 2:  // two branches -> concat -> dense -> softmax -> cross entropy
      build = [&](Tape& t) {
        auto xv = t.constant(Tensor::vector(x1));
        auto a = sigmoid(t, dense(t, xv, t.parameter(w1), t.parameter(b1)));
        auto b = affine(t, dense(t, xv, t.parameter(w1), t.parameter(b1)), scale, shift);
        std::vector<Var> parts{a, b};
        auto joined = concat(t, parts);
        auto logits = dense(t, joined, t.parameter(w3), t.parameter(b2));
        return cross_entropy(t, softmax(t, logits), t.constant(Tensor::vector({y2[0], y2[1]})));
      };
      params = {&w1, &b1, &w3, &b2};
      break;
    case 3:  // affine -> sigmoid -> batched bce
      build = [&](Tape& t) {
        auto xs = t.constant(Tensor({batch, in}, x));
        auto p = sigmoid(t, affine(t, dense(t, xs, t.parameter(w1), t.parameter(b1)), scale, shift));
        std::vector<double> labels(batch * hidden);
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<double>((i + pick) % 2);
        return bce_loss(t, p, t.constant(Tensor({batch, hidden}, labels)));
      };
      params = {&w1, &b1};
      break;
    default:  // the random-b head: dense(n -> 1) -> sigmoid -> bce
      build = [&](Tape& t) {
        auto w = t.parameter(w1);
        auto h = dense(t, t.constant(Tensor::vector(x1)), w, t.parameter(b1));
        auto out = dense(t, sigmoid(t, h), t.parameter(w2), t.parameter(b2));
        return bce_loss(t, sigmoid(t, select(t, out, 0)), t.constant(Tensor::vector({y})));
      };
      params = {&w1, &b1, &w2, &b2};
  }

  Tape tape;
  const auto grads = tape.backward(build(tape));
  for (Parameter* p : params) {
    expect_close(grads.of(*p), numeric_gradient(*p, build), 1e-6,
                 "case " + std::to_string(GetParam()) + " " + p->name());
  }
}

INSTANTIATE_TEST_SUITE_P(Random, ClassicalGradients, ::testing::Range(0, 60));

TEST(ChainRule, IdentityLayerLeavesGradientsUnchanged) {
  Rng rng(17);
  auto w = random_parameter("w", {3, 4}, rng);
  auto b = random_parameter("b", {3}, rng);
  const auto x = testing::random_vector(4, -1, 1, rng);
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;

  auto loss = [&](Tape& t, bool split) {
    auto h = dense(t, t.constant(Tensor::vector(x)), t.parameter(w), t.parameter(b));
    if (split) h = dense(t, h, t.constant(Tensor({3, 3}, eye)), t.constant(Tensor::zeros({3})));
    return bce_loss(t, sigmoid(t, h), t.constant(Tensor::vector({1.0, 0.0, 1.0})));
  };
  Tape one, two;
  const auto g1 = one.backward(loss(one, false));
  const auto g2 = two.backward(loss(two, true));
  for (Parameter* p : {&w, &b}) {
    const auto a = g1.of(*p), c = g2.of(*p);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-12);
  }
}

QuantumLayer make_layer(int nq, int nl, diff::Method method) {
  return QuantumLayer{qsim::build_iqp_circuit(nq, nl), diff::DiffConfig{method, 0.01, 1, 1e-5}, nullptr, 0};
}

TEST(QuantumNode, HybridGradientMatchesWholeModelDifferences) {
  const auto layer = make_layer(3, 2, diff::Method::FiniteDiff);
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    auto theta = random_parameter("theta", {6}, rng, 1.5);
    auto w = random_parameter("w", {1, 3}, rng);
    auto b = random_parameter("b", {1}, rng);
    const auto x = testing::random_vector(3, 0, std::numbers::pi, rng);
    const double y = static_cast<double>(trial % 2);
    const Builder build = [&](Tape& t) {
      auto z = quantum(t, layer, t.parameter(theta), t.constant(Tensor::vector(x)), Rng(1));
      auto p = sigmoid(t, dense(t, z, t.parameter(w), t.parameter(b)));
      return bce_loss(t, p, t.constant(Tensor::vector({y})));
    };
    Tape tape;
    const auto grads = tape.backward(build(tape));
    for (Parameter* p : {&theta, &w, &b}) expect_close(grads.of(*p), numeric_gradient(*p, build), 1e-4, p->name());
  }
}

TEST(QuantumNode, FeaturesReceiveNoGradient) {
  const auto layer = make_layer(2, 1, diff::Method::ParamShift);
  Parameter theta("theta", Tensor::vector({0.1, -0.2}));
  Parameter features("x", Tensor::vector({0.5, 1.0}));
  Tape tape;
  auto z = quantum(tape, layer, tape.parameter(theta), tape.parameter(features), Rng(0));
  const auto grads = tape.backward(select(tape, z, 0));
  EXPECT_FALSE(grads.contains(features));
  EXPECT_TRUE(grads.contains(theta));
}

TEST(QuantumNode, SharedWeightsAccumulate) {
  const auto layer = make_layer(2, 2, diff::Method::ParamShift);
  Rng rng(55);
  auto theta = random_parameter("theta", {4}, rng);
  std::vector<std::vector<double>> inputs;
  for (int k = 0; k < 4; ++k) inputs.push_back(testing::random_vector(2, 0, 3, rng));

  auto single_loss = [&](Tape& t, Var th, const std::vector<double>& x) {
    auto z = quantum(t, layer, th, t.constant(Tensor::vector(x)), Rng(0));
    auto p = affine(t, select(t, z, 1), -0.5, 0.5);
    return bce_loss(t, p, t.constant(Tensor::vector({1.0})));
  };

  std::vector<double> separate(4, 0.0);
  for (const auto& x : inputs) {
    Tape t;
    const auto g = t.backward(single_loss(t, t.parameter(theta), x)).of(theta);
    for (std::size_t i = 0; i < 4; ++i) separate[i] += g[i];
  }

  Tape t;
  const auto th = t.parameter(theta);
  std::vector<Var> losses;
  for (const auto& x : inputs) losses.push_back(single_loss(t, th, x));
  auto total = dense(t, concat(t, losses), t.constant(Tensor({1, 4}, {1, 1, 1, 1})),
                     t.constant(Tensor::vector({0.0})));
  const auto together = t.backward(total).of(theta);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(together[i], separate[i], 1e-10);
}

TEST(QuantumNode, CountsForwardAndBackwardEvaluations) {
  qsim::EvalCounter counter;
  auto layer = make_layer(3, 3, diff::Method::Spsb);
  layer.counter = &counter;
  Parameter theta("theta", Tensor::zeros({9}));
  Tape tape;
  auto z = quantum(tape, layer, tape.parameter(theta), tape.constant(Tensor::vector({1, 2, 3})), Rng(4));
  EXPECT_EQ(counter.total(), 1u);
  tape.backward(select(tape, z, 0));
  EXPECT_EQ(counter.total(), 3u);
}

}  // namespace
}  // namespace spsb::graph
