#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kpx/autodiff/gradient_check.hpp"
#include "kpx/autodiff/ops.hpp"
#include "kpx/autodiff/params.hpp"

namespace kpx::ad {
namespace {

Value random_param(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  return Value::parameter(std::move(shape), std::move(data));
}

// Central finite differences over every coordinate, independent of
// gradient_check so the checker itself is covered.
std::vector<std::vector<double>> numeric_grads(const std::function<Value()>& f,
                                               std::vector<Value>& params, double eps = 1e-5) {
  std::vector<std::vector<double>> out;
  for (Value& p : params) {
    std::vector<double> g(p.size());
    auto d = p.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + eps;
      const double fp = f().item();
      d[i] = orig - eps;
      const double fm = f().item();
      d[i] = orig;
      g[i] = (fp - fm) / (2 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

void expect_grads_match(const std::function<Value()>& f, std::vector<Value> params,
                        const std::string& label) {
  for (Value& p : params) p.zero_grad();
  {
    Graph g;
    g.backward(f());
  }
  const auto numeric = numeric_grads(f, params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double a = params[k].grad()[i];
      const double n = numeric[k][i];
      EXPECT_LT(std::abs(a - n) / std::max(1.0, std::abs(n)), 1e-4)
          << label << " param " << k << " coord " << i;
    }
  }
}

TEST(AutodiffForward, MatmulIdentity) {
  const Value eye = Value::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Value a = Value::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Value c = matmul(eye, a);
  EXPECT_EQ(c.shape(), a.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(c.data()[i], a.data()[i]);
}

TEST(AutodiffForward, SoftmaxOfZerosIsUniform) {
  const Value s = softmax(Value::vector({0, 0, 0}), 0);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(AutodiffForward, Relu) {
  const Value r = relu(Value::vector({-1, 2}));
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[1], 2.0);
}

TEST(AutodiffForward, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-50, 50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(4 * 7);
    for (double& v : d) v = dist(rng);
    const Value x = Value::constant({4, 7}, d);
    for (std::size_t axis : {0u, 1u}) {
      const Value s = softmax(x, axis);
      const Value totals = sum(s, axis);
      for (double t : totals.data()) EXPECT_NEAR(t, 1.0, 1e-12);
      for (double v : s.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(AutodiffForward, ConcatSliceAndReductionsAlongAxes) {
  const Value a = Value::matrix(2, 2, {1, 2, 3, 4});
  const Value b = Value::matrix(2, 1, {5, 6});
  const Value c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()),
            (std::vector<double>{1, 2, 5, 3, 4, 6}));
  const Value s = slice(c, 1, 1, 3);
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()),
            (std::vector<double>{2, 5, 4, 6}));
  EXPECT_EQ(max(c, 1).data()[1], 6.0);
  EXPECT_EQ(mean(c, 0).data()[2], 5.5);
  EXPECT_EQ(sum(c, 1).data()[0], 8.0);
}

TEST(AutodiffForward, GatherNegativeIndexYieldsZeroRow) {
  const Value x = Value::matrix(2, 2, {1, 2, 3, 4});
  const std::vector<long> idx{1, -1, 0};
  const Value g = gather_rows(x, idx);
  EXPECT_EQ(std::vector<double>(g.data().begin(), g.data().end()),
            (std::vector<double>{3, 4, 0, 0, 1, 2}));
}

TEST(AutodiffErrors, ShapeMismatchNamesOpAndShapes) {
  const Value a = Value::zeros({3, 4});
  const Value b = Value::zeros({5, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[3,4]"), std::string::npos);
    EXPECT_NE(msg.find("[5,2]"), std::string::npos);
  }
  EXPECT_THROW(add(Value::zeros({2}), Value::zeros({3})), ShapeError);
  EXPECT_THROW(concat({Value::zeros({2, 2}), Value::zeros({3, 3})}, 0), ShapeError);
  EXPECT_THROW(reshape(Value::zeros({2, 3}), {4}), ShapeError);
  EXPECT_THROW(repeat(Value::zeros({2, 3}), 0, 4), ShapeError);
}

TEST(AutodiffErrors, ScalarBroadcastAllowed) {
  const Value x = add(Value::vector({1, 2}), Value::scalar(3));
  EXPECT_EQ(x.data()[1], 5.0);
}

TEST(AutodiffBackward, SumOfSquares) {
  Value w = Value::parameter({3}, {1, 2, 3});
  Graph g;
  g.backward(sum_all(mul(w, w)));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()),
            (std::vector<double>{2, 4, 6}));
}

TEST(AutodiffBackward, SigmoidAtZero) {
  Value x = Value::parameter({}, {0.0});
  Graph g;
  g.backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(AutodiffBackward, NonScalarLossRejected) {
  Value x = Value::parameter({2}, {1, 2});
  Graph g;
  const Value y = mul(x, x);
  EXPECT_THROW(g.backward(y), std::invalid_argument);
}

TEST(AutodiffBackward, UnreachableParameterGetsZeroGrad) {
  Value used = Value::parameter({2}, {1, 2});
  Value unused = Value::parameter({2}, {3, 4});
  Graph g;
  g.backward(sum_all(square(used)));
  for (double v : unused.grad()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(unused.grad().size(), unused.size());
}

TEST(AutodiffBackward, NoRecordingWithoutGraph) {
  Value x = Value::parameter({2}, {1, 2});
  const Value y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(AutodiffBackward, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Value a = random_param({3, 4}, rng);
  Value b = random_param({3, 4}, rng);
  Value c = random_param({4, 2}, rng);
  Value pos = random_param({3, 4}, rng, 0.5, 2.0);
  Value s = random_param({}, rng);
  const std::vector<long> idx{2, -1, 0, 2};

  const std::vector<std::pair<std::string, std::function<Value()>>> cases = {
      {"add", [&] { return sum_all(square(add(a, b))); }},
      {"sub", [&] { return sum_all(square(sub(a, b))); }},
      {"mul", [&] { return sum_all(mul(a, b)); }},
      {"div", [&] { return sum_all(div(a, pos)); }},
      {"scalar_mul", [&] { return sum_all(square(mul(a, s))); }},
      {"scale", [&] { return sum_all(square(scale(add_scalar(a, 0.3), -2.5))); }},
      {"matmul", [&] { return sum_all(square(matmul(a, c))); }},
      {"transpose", [&] { return sum_all(square(matmul(transpose(c), transpose(a)))); }},
      {"concat0", [&] { return sum_all(square(concat({a, b}, 0))); }},
      {"concat1", [&] { return sum_all(mul(concat({a, b}, 1), concat({b, a}, 1))); }},
      {"slice", [&] { return sum_all(square(slice(a, 1, 1, 3))); }},
      {"reshape", [&] { return sum_all(square(matmul(reshape(a, {4, 3}), reshape(b, {3, 4})))); }},
      {"gather", [&] { return sum_all(square(gather_rows(a, idx))); }},
      {"repeat", [&] { return sum_all(mul(repeat(slice(a, 0, 0, 1), 0, 3), b)); }},
      {"relu", [&] { return sum_all(square(relu(a))); }},
      {"sigmoid", [&] { return sum_all(sigmoid(a)); }},
      {"tanh", [&] { return sum_all(mul(tanh(a), b)); }},
      {"exp", [&] { return sum_all(exp(a)); }},
      {"log", [&] { return sum_all(log(pos)); }},
      {"sqrt", [&] { return sum_all(sqrt(pos)); }},
      {"clamp", [&] { return sum_all(square(clamp(a, -0.5, 0.5))); }},
      {"huber", [&] { return sum_all(huber(scale(a, 3.0), 1.0)); }},
      {"softmax0", [&] { return sum_all(mul(softmax(a, 0), b)); }},
      {"softmax1", [&] { return sum_all(mul(softmax(a, 1), b)); }},
      {"log_softmax", [&] { return sum_all(mul(log_softmax(a, 1), b)); }},
      {"sum", [&] { return sum_all(square(sum(a, 0))); }},
      {"mean", [&] { return sum_all(square(mean(a, 1))); }},
      {"max", [&] { return sum_all(square(max(a, 0))); }},
      {"mean_all", [&] { return square(mean_all(a)); }},
  };
  for (const auto& [label, f] : cases) expect_grads_match(f, {a, b, c, pos, s}, label);
}

TEST(AutodiffBackward, MultipleSeeds) {
  Value x = Value::parameter({2}, {1, 3});
  Graph g;
  const Value y = square(x);
  const Value z = sum_all(y);
  const std::vector<Seed> seeds{{z, {2.0}}, {y, {1.0, -1.0}}};
  g.backward(seeds);
  // d/dx of 2*sum(x^2) + (x0^2 - x1^2)
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0 * 1 + 2.0 * 1);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0 * 3 - 2.0 * 3);
}

TEST(AutodiffBackward, RepeatedPassesAreBitwiseIdentical) {
  auto run = [] {
    std::mt19937_64 rng(5);
    Value w = random_param({6, 5}, rng);
    Value x = random_param({4, 6}, rng);
    Graph g;
    const Value loss = sum_all(log_softmax(tanh(matmul(x, w)), 1));
    g.backward(loss);
    std::vector<double> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(GradientCheck, QuadraticFormIsExactToRoundoff) {
  std::mt19937_64 rng(2);
  Value q = Value::constant({3, 3}, {2, 0.5, 0, 0.5, 3, -1, 0, -1, 4});
  Value x = random_param({3, 1}, rng);
  std::vector<Value> params{x};
  const auto report = gradient_check(
      [&] { return sum_all(matmul(transpose(x), matmul(q, x))); }, params);
  EXPECT_EQ(report.checked, 3u);
  EXPECT_LT(report.max_relative_error, 1e-7);
}

TEST(GradientCheck, ReluKinkIsExcluded) {
  Value x = Value::parameter({3}, {0.0, 1.0, -2.0});
  std::vector<Value> params{x};
  const auto report = gradient_check([&] { return sum_all(relu(x)); }, params);
  EXPECT_EQ(report.skipped_at_kinks, 1u);
  EXPECT_TRUE(std::isfinite(report.max_relative_error));
  EXPECT_LT(report.max_relative_error, 1e-7);
}

TEST(GradientCheck, RejectsBadEpsilon) {
  Value x = Value::parameter({1}, {1.0});
  std::vector<Value> params{x};
  GradientCheckOptions opts;
  opts.epsilon = 1e-2;
  EXPECT_THROW(gradient_check([&] { return sum_all(x); }, params, opts), std::invalid_argument);
}

TEST(GradientCheck, NonFiniteLossThrows) {
  Value x = Value::parameter({1}, {0.0});
  std::vector<Value> params{x};
  EXPECT_THROW(gradient_check([&] { return sum_all(log(x)); }, params), std::runtime_error);
}

TEST(ParamStoreTest, GlorotInitIsIndependentOfInsertionOrder) {
  ParamStore a, b;
  a.add_glorot("w1", 4, 3, 9);
  a.add_glorot("w2", 2, 2, 9);
  b.add_glorot("w2", 2, 2, 9);
  EXPECT_EQ(a.tensor("w2").data, b.tensor("w2").data);
}

TEST(ParamStoreTest, BindingReportsZeroForUnboundParameters) {
  ParamStore store;
  store.add_zeros("used", {2});
  store.add_zeros("unused", {3});
  ParamBinding bind(store);
  Graph g;
  g.backward(sum_all(add_scalar(bind("used"), 1.0)));
  const GradientSet grads = bind.gradients();
  EXPECT_EQ(grads[0], (std::vector<double>{1, 1}));
  EXPECT_EQ(grads[1], (std::vector<double>{0, 0, 0}));
}

}  // namespace
}  // namespace kpx::ad
