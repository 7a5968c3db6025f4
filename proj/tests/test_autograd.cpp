#include <doctest.h>

#include <cmath>

#include "cxr/autograd.hpp"
#include "cxr/error.hpp"
#include "cxr/ops.hpp"
#include "cxr/rng.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cxr;

namespace {

// Scalar sum used to close graphs into a loss.
Var sum_all(const Var& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.value().size(); ++i) s += x.value()[i];
  return Var::make_op(Tensor::scalar(s), {x}, [](GradNode& self) {
    GradNode& in = *self.parents[0];
    if (!in.requires_grad) return;
    in.accumulate(Tensor::full(in.value.shape(), self.grad[0]));
  });
}

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("conv2d: all-ones 3x3 kernel sums the window") {
  Var input(Tensor::full({1, 1, 3, 3}, 1.0));
  Var kernel(Tensor::full({1, 1, 3, 3}, 1.0));
  Var bias(Tensor::zeros({1}));
  Var out = conv2d(input, kernel, bias, ConvSpec{1, 3, 1, 0});
  CHECK(out.value().shape() == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(out.value()[0] == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv2d: 1x1 kernel scales") {
  Var input(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var kernel(Tensor({1, 1, 1, 1}, {2}));
  Var bias(Tensor::zeros({1}));
  Var out = conv2d(input, kernel, bias, ConvSpec{1, 1, 1, 0});
  const Tensor expected({1, 1, 2, 2}, {2, 4, 6, 8});
  CHECK(oracle::max_abs_diff(out.value(), expected) == 0.0);
}

TEST_CASE("conv2d matches the naive-loop oracle") {
  RandomStream rng(11);
  Tensor in = testutil::random_tensor({2, 3, 8, 8}, rng);
  Tensor k = testutil::random_tensor({4, 3, 3, 3}, rng);
  Tensor b = testutil::random_tensor({4}, rng);
  Var out = conv2d(Var(in), Var(k), Var(b), ConvSpec{4, 3, 2, 1});
  Tensor ref = oracle::conv2d_ref(in, k, b, 2, 1);
  CHECK(out.value().same_shape(ref));
  CHECK(oracle::max_abs_diff(out.value(), ref) < 1e-12);
}

TEST_CASE("conv2d rejects mismatched shapes naming both") {
  Var input(Tensor::zeros({1, 2, 4, 4}));
  Var kernel(Tensor::zeros({1, 3, 3, 3}));
  Var bias(Tensor::zeros({1}));
  CHECK_THROWS_WITH_AS(conv2d(input, kernel, bias, ConvSpec{1, 3, 1, 0}),
                       doctest::Contains("(1, 2, 4, 4)"), ShapeError);
  CHECK_THROWS_AS(conv2d(Var(Tensor::zeros({1, 1, 2, 2})), Var(Tensor::zeros({1, 1, 3, 3})),
                         bias, ConvSpec{1, 3, 1, 0}),
                  ValueError);  // non-positive output extent
}

TEST_CASE("maxpool2d basics and oracle") {
  Var in(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(maxpool2d(in, 2).value()[0] == 4.0);

  Var constant(Tensor::full({1, 2, 4, 4}, 3.25));
  Tensor pooled = maxpool2d(constant, 2).value();
  CHECK(pooled.shape() == std::vector<std::size_t>{1, 2, 2, 2});
  for (std::size_t i = 0; i < pooled.size(); ++i) CHECK(pooled[i] == 3.25);

  RandomStream rng(5);
  Tensor big = testutil::random_tensor({1, 2, 6, 6}, rng);
  CHECK(oracle::max_abs_diff(maxpool2d(Var(big), 3).value(), oracle::maxpool_ref(big, 3)) == 0.0);

  CHECK_THROWS_AS(maxpool2d(Var(Tensor::zeros({1, 1, 5, 4})), 2), ShapeError);
}

TEST_CASE("maxpool2d gradient goes to first maximum on ties") {
  Var in(Tensor({1, 1, 2, 2}, {7.0, 7.0, 7.0, 7.0}), true);
  Var loss = sum_all(maxpool2d(in, 2));
  backward(loss);
  const Tensor& g = in.grad();
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("affine identity and shift") {
  Tensor identity({2, 2}, {1, 0, 0, 1});
  Var in(Tensor({1, 2}, {1, 2}));
  CHECK(oracle::max_abs_diff(affine(in, Var(identity), Var(Tensor::zeros({2}))).value(),
                             in.value()) == 0.0);
  Tensor shifted = affine(in, Var(identity), Var(Tensor({2}, {1, 1}))).value();
  CHECK(shifted.at2(0, 0) == 2.0);
  CHECK(shifted.at2(0, 1) == 3.0);
}

TEST_CASE("affine matches triple-loop oracle") {
  RandomStream rng(17);
  Tensor in = testutil::random_tensor({4, 7}, rng);
  Tensor w = testutil::random_tensor({7, 3}, rng);
  Tensor b = testutil::random_tensor({3}, rng);
  CHECK(oracle::max_abs_diff(affine(Var(in), Var(w), Var(b)).value(),
                             oracle::affine_ref(in, w, b)) < 1e-12);
  CHECK_THROWS_AS(affine(Var(in), Var(Tensor::zeros({6, 3})), Var(b)), ShapeError);
}

TEST_CASE("activations: definitions and dispatch") {
  Var x(Tensor({4}, {-1.0, 0.0, 2.0, -3.0}));
  Tensor r = relu(x).value();
  CHECK(r[0] == 0.0);
  CHECK(r[2] == 2.0);

  CHECK(sigmoid(Var(Tensor::scalar(0.0))).value()[0] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor sm = softmax(Var(Tensor({2}, {0.0, 0.0}))).value();
  CHECK(sm[0] == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(activation("swish", x), ValueError);
  CHECK(activation("relu", x).value()[3] == 0.0);
}

TEST_CASE("sigmoid is stable for large magnitudes and stays in (0,1)") {
  Tensor s = sigmoid(Var(Tensor({4}, {-700.0, -30.0, 30.0, 36.0}))).value();
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(std::isfinite(s[i]));
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
  }
  // beyond exp's underflow range the output saturates but never leaves [0,1]
  Tensor extreme = sigmoid(Var(Tensor({2}, {-800.0, 800.0}))).value();
  CHECK(extreme[0] == 0.0);
  CHECK(extreme[1] == 1.0);
}

TEST_CASE("softmax rows sum to one") {
  RandomStream rng(23);
  Tensor x = testutil::random_tensor({5, 7}, rng, 4.0);
  Tensor p = softmax(Var(x)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) sum += p.at2(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm2d standardizes and matches the direct formula") {
  RandomStream rng(31);
  Tensor in = testutil::random_tensor({4, 2, 3, 3}, rng);
  Var gamma(Tensor::full({2}, 1.0));
  Var beta(Tensor::zeros({2}));

  Tensor out = batchnorm2d(Var(in), gamma, beta, 1e-8, true).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) mean += out.data()[(b * 2 + c) * 9 + i];
    mean /= 36.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        const double d = out.data()[(b * 2 + c) * 9 + i] - mean;
        var += d * d;
      }
    var /= 36.0;
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }

  Tensor ref = oracle::batchnorm_ref(in, gamma.value(), beta.value(), 1e-10);
  Tensor out2 = batchnorm2d(Var(in), gamma, beta, 1e-10, true).value();
  CHECK(oracle::max_abs_diff(out2, ref) < 1e-10);
}

TEST_CASE("batchnorm2d: constant input maps to zero, eps guards the variance") {
  Tensor out = batchnorm2d(Var(Tensor::full({2, 1, 2, 2}, 5.0)), Var(Tensor::full({1}, 1.0)),
                           Var(Tensor::zeros({1})), 1e-5, true)
                   .value();
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
  CHECK_THROWS_AS(batchnorm2d(Var(Tensor::zeros({1, 1, 2, 2})), Var(Tensor::full({1}, 1.0)),
                              Var(Tensor::zeros({1})), 0.0, true),
                  ValueError);
}

TEST_CASE("batchnorm2d running statistics drive inference mode") {
  RandomStream rng(37);
  Tensor in = testutil::random_tensor({8, 1, 2, 2}, rng);
  Var gamma(Tensor::full({1}, 1.0));
  Var beta(Tensor::zeros({1}));
  BatchNormState state(1);
  state.momentum = 1.0;  // adopt the batch statistics outright
  batchnorm2d(Var(in), gamma, beta, 1e-8, true, &state);

  Tensor train_out = batchnorm2d(Var(in), gamma, beta, 1e-8, true).value();
  Tensor infer_out = batchnorm2d(Var(in), gamma, beta, 1e-8, false, &state).value();
  CHECK(oracle::max_abs_diff(train_out, infer_out) < 1e-9);
  CHECK_THROWS_AS(batchnorm2d(Var(in), gamma, beta, 1e-8, false, nullptr), ValueError);
}

TEST_CASE("backward: analytic derivatives of simple graphs") {
  Var x(Tensor::scalar(0.0), true);
  backward(sum_all(sigmoid(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));

  Var y(Tensor::scalar(3.0), true);
  Var y2 = Var::make_op(Tensor::scalar(9.0), {y, y}, [](GradNode& self) {
    // product rule for x*x written as a two-parent op
    self.parents[0]->accumulate(Tensor::scalar(self.grad[0] * self.parents[1]->value[0]));
    self.parents[1]->accumulate(Tensor::scalar(self.grad[0] * self.parents[0]->value[0]));
  });
  backward(y2);
  CHECK(y.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward accumulates across fan-out (diamond)") {
  Var x(Tensor({3}, {1.0, -2.0, 5.0}), true);
  backward(sum_all(add(x, x)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Var x(Tensor({2}, {1.0, 2.0}), true);
  CHECK_THROWS_AS(backward(add(x, x)), ValueError);
}

TEST_CASE("backward leaves no-grad inputs untouched") {
  Var x(Tensor({2}, {1.0, 2.0}), false);
  Var loss = sum_all(relu(x));
  backward(loss);
  CHECK(!x.has_grad());
}

TEST_CASE("ops are deterministic") {
  RandomStream rng(41);
  Tensor in = testutil::random_tensor({2, 2, 4, 4}, rng);
  Tensor k = testutil::random_tensor({3, 2, 3, 3}, rng);
  Tensor b = testutil::random_tensor({3}, rng);
  Tensor a = conv2d(Var(in), Var(k), Var(b), ConvSpec{3, 3, 1, 1}).value();
  Tensor c = conv2d(Var(in), Var(k), Var(b), ConvSpec{3, 3, 1, 1}).value();
  CHECK(oracle::max_abs_diff(a, c) == 0.0);
}

TEST_CASE("reshape, flatten, global_avg_pool round out the layer set") {
  RandomStream rng(43);
  Tensor in = testutil::random_tensor({2, 3, 2, 2}, rng);
  CHECK(flatten(Var(in)).value().shape() == std::vector<std::size_t>{2, 12});

  Var v(in, true);
  Var gap = global_avg_pool(v);
  CHECK(gap.value().shape() == std::vector<std::size_t>{2, 3});
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) expect += in.data()[i];
  CHECK(gap.value().at2(0, 0) == doctest::Approx(expect / 4.0).epsilon(1e-12));

  backward(sum_all(gap));
  for (std::size_t i = 0; i < 4; ++i) CHECK(v.grad()[i] == doctest::Approx(0.25).epsilon(1e-15));
}

}  // TEST_SUITE
