#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../common/gradient_suite.hpp"
#include "../common/oracles.hpp"
#include "akid/autodiff.hpp"
#include "akid/gradcheck.hpp"
#include "akid/kernels.hpp"
#include "akid/ops.hpp"
#include "akid/rng.hpp"
#include "akid/tensor.hpp"

using namespace akid;
namespace k = akid::kernels;

namespace {

Tensor t2(std::size_t h, std::size_t w, std::vector<double> v) { return Tensor::from(Shape{1, h, w, 1}, v); }

oracle::Image to_image(const Tensor& t) {
  return {t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3], t.to_vector()};
}

}  // namespace

TEST_CASE("shape invariants") {
  Tensor t(Shape{2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(Tensor().numel() == 1);
  CHECK_THROWS_AS(Shape({2, 0}), ShapeError);
  CHECK_THROWS_AS(t.reshaped(Shape{5}), ShapeError);
  CHECK(t.reshaped(Shape{24}).shape() == Shape{24});
  CHECK_THROWS_AS(t.data<double>(), Error);
}

TEST_CASE("precision switch") {
  CHECK(Tensor(Shape{1}).dtype() == DType::f32);
  {
    PrecisionScope scope(DType::f64);
    CHECK(Tensor(Shape{1}).dtype() == DType::f64);
  }
  CHECK(default_dtype() == DType::f32);
}

TEST_CASE("pcg32 determinism and known stream") {
  Rng a(42, 54), b(42, 54);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());
  // Reference output of the pcg32 demo (seed 42, sequence 54).
  Rng demo(42, 54);
  CHECK(demo.next_u32() == 0xa15c02b7U);
  CHECK(demo.next_u32() == 0x7b47f409U);
  CHECK(demo.next_u32() == 0xba1d3330U);
  Rng c(1, 2);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(7) < 7U);
  }
}

TEST_CASE("output-shape rules match padding-then-slide oracle for H,k,s in [1,7]") {
  for (std::size_t h = 1; h <= 7; ++h) {
    for (std::size_t kk = 1; kk <= 7; ++kk) {
      for (std::size_t s = 1; s <= 7; ++s) {
        const auto same = k::axis_geometry(h, kk, s, k::Padding::same, "h");
        const auto ref = oracle::same_axis(h, kk, s);
        CHECK(same.out == ref.out);
        CHECK(same.pad_lead == ref.lead);
        CHECK(same.pad_trail == ref.trail);
        if (kk <= h) {
          CHECK(k::axis_geometry(h, kk, s, k::Padding::valid, "h").out == oracle::valid_axis(h, kk, s).out);
        } else {
          CHECK_THROWS_AS(k::axis_geometry(h, kk, s, k::Padding::valid, "h"), ShapeError);
        }
      }
    }
  }
}

TEST_CASE("conv2d examples") {
  const Tensor ones = Tensor::full(Shape{1, 3, 3, 1}, 1.0);
  SUBCASE("1x1 identity kernel") {
    Tensor out = k::conv2d(ones, Tensor::full(Shape{1, 1, 1, 1}, 1.0), Tensor(Shape{1}), 1, 1, k::Padding::same);
    CHECK(out.identical(ones));
  }
  SUBCASE("3x3 ones SAME: corners 4, edges 6, center 9") {
    Tensor out = k::conv2d(ones, Tensor::full(Shape{3, 3, 1, 1}, 1.0), Tensor(Shape{1}), 1, 1, k::Padding::same);
    std::size_t oh = 0, ow = 0;
    const auto ref = oracle::conv2d(to_image(ones), std::vector<double>(9, 1.0), 3, 3, 1, {0.0}, 1, 1, true, &oh, &ow);
    CHECK(ref == std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4});
    CHECK(out.to_vector() == ref);
  }
  SUBCASE("28x28, 5x5 stride 5 SAME gives 6x6") {
    Tensor out = k::conv2d(Tensor(Shape{1, 28, 28, 1}), Tensor(Shape{5, 5, 1, 2}), Tensor(Shape{2}), 5, 5,
                           k::Padding::same);
    CHECK(out.shape() == Shape{1, 6, 6, 2});
  }
  SUBCASE("channel mismatch names the axis") {
    try {
      k::conv2d(ones, Tensor(Shape{1, 1, 2, 1}), Tensor(Shape{1}), 1, 1, k::Padding::same);
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("axis 3") != std::string::npos);
    }
  }
}

TEST_CASE("conv2d agrees with direct convolution on random instances") {
  Rng rng(7, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(2), h = 1 + rng.below(7), w = 1 + rng.below(7), cin = 1 + rng.below(3),
                      cout = 1 + rng.below(3), kh = 1 + rng.below(4), kw = 1 + rng.below(4), sh = 1 + rng.below(3),
                      sw = 1 + rng.below(3);
    const bool same = rng.bernoulli(0.5) || kh > h || kw > w;
    PrecisionScope precision(DType::f64);
    Tensor x = gradsuite::random_tensor(rng, Shape{n, h, w, cin});
    Tensor kernel = gradsuite::random_tensor(rng, Shape{kh, kw, cin, cout});
    Tensor bias = gradsuite::random_tensor(rng, Shape{cout});
    Tensor out = k::conv2d(x, kernel, bias, sh, sw, same ? k::Padding::same : k::Padding::valid);
    std::size_t oh = 0, ow = 0;
    const auto ref =
        oracle::conv2d(to_image(x), kernel.to_vector(), kh, kw, cout, bias.to_vector(), sh, sw, same, &oh, &ow);
    REQUIRE(out.shape() == Shape{n, oh, ow, cout});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("maxpool2d examples") {
  k::Window2d w2{2, 2, 2, 2, k::Padding::valid};
  CHECK(k::maxpool2d(t2(2, 2, {1, 2, 3, 4}), w2).out.to_vector() == std::vector<double>{4});
  CHECK(k::maxpool2d(Tensor::full(Shape{1, 4, 4, 2}, 3.0), w2).out.to_vector() == std::vector<double>(8, 3.0));
  std::vector<double> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  const Tensor x = t2(4, 4, ramp);
  std::size_t oh = 0, ow = 0;
  const auto ref = oracle::maxpool2d(to_image(x), 2, 2, 2, 2, false, &oh, &ow);
  CHECK(ref == std::vector<double>{5, 7, 13, 15});
  CHECK(k::maxpool2d(x, w2).out.to_vector() == ref);
  CHECK_THROWS_AS(k::maxpool2d(t2(2, 2, {1, 2, 3, 4}), k::Window2d{3, 3, 1, 1, k::Padding::valid}), ShapeError);
}

TEST_CASE("maxpool2d agrees with sorted-window oracle; padding never wins") {
  Rng rng(9, 3);
  PrecisionScope precision(DType::f64);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t h = 1 + rng.below(7), w = 1 + rng.below(7), kh = 1 + rng.below(4), kw = 1 + rng.below(4),
                      sh = 1 + rng.below(3), sw = 1 + rng.below(3);
    const bool same = rng.bernoulli(0.5) || kh > h || kw > w;
    // All-negative input: a zero-padded implementation would select padding.
    Tensor x = gradsuite::random_tensor(rng, Shape{2, h, w, 2}, -5.0, -1.0);
    auto result = k::maxpool2d(x, {kh, kw, sh, sw, same ? k::Padding::same : k::Padding::valid});
    std::size_t oh = 0, ow = 0;
    const auto ref = oracle::maxpool2d(to_image(x), kh, kw, sh, sw, same, &oh, &ow);
    CHECK(result.out.to_vector() == ref);
  }
}

TEST_CASE("relu and maxout") {
  const Tensor x = Tensor::from(Shape{3}, {-1, 0, 2});
  CHECK(k::relu(x).to_vector() == std::vector<double>{0, 0, 2});
  const Tensor m = Tensor::from(Shape{4}, {1, 3, 2, 0});
  CHECK(k::maxout(m, 2).out.to_vector() == std::vector<double>{3, 2});
  CHECK(k::maxout(m, 1).out.identical(m));
  CHECK_THROWS_AS(k::maxout(m, 3), ConfigError);
  // Per-group max oracle on a wider tensor.
  Rng rng(3, 3);
  Tensor wide = gradsuite::random_tensor(rng, Shape{2, 6});
  auto out = k::maxout(wide, 3).out;
  for (std::size_t row = 0; row < 2; ++row) {
    for (std::size_t g = 0; g < 2; ++g) {
      double best = -1e300;
      for (std::size_t j = 0; j < 3; ++j) best = std::max(best, wide.at(row * 6 + g * 3 + j));
      CHECK(out.at(row * 2 + g) == best);
    }
  }
}

TEST_CASE("inner_product examples") {
  const Tensor x = Tensor::from(Shape{1, 2}, {1, 2});
  CHECK(k::inner_product(x, Tensor::from(Shape{2, 2}, {1, 0, 0, 1}), Tensor::from(Shape{2}, {1, 1})).to_vector() ==
        std::vector<double>{2, 3});
  CHECK(k::inner_product(x, Tensor(Shape{2, 2}), Tensor(Shape{2})).to_vector() == std::vector<double>{0, 0});
  CHECK(k::inner_product(x, Tensor::from(Shape{2, 2}, {1, 2, 3, 4}), Tensor(Shape{2})).to_vector() ==
        std::vector<double>{7, 10});
  // Non-2D inputs are flattened.
  CHECK(k::inner_product(Tensor::full(Shape{3, 2, 2, 1}, 1.0), Tensor::full(Shape{4, 5}, 1.0), Tensor(Shape{5})).shape() ==
        Shape{3, 5});
  CHECK_THROWS_AS(k::inner_product(x, Tensor(Shape{3, 2}), Tensor(Shape{2})), ShapeError);
}

TEST_CASE("batch_norm examples") {
  PrecisionScope precision(DType::f64);
  const Tensor gamma = Tensor::full(Shape{1}, 1.0), beta = Tensor::full(Shape{1}, 0.5);
  auto constant = k::batch_norm_train(Tensor::full(Shape{4, 1}, 3.0), gamma, beta, 1e-5);
  CHECK(constant.out.to_vector() == std::vector<double>(4, 0.5));
  auto pair = k::batch_norm_train(Tensor::from(Shape{2, 1}, {1, 3}), gamma, Tensor(Shape{1}), 1e-12);
  CHECK(pair.mean.item() == 2.0);
  CHECK(pair.var.item() == 1.0);
  CHECK(pair.out.at(0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(pair.out.at(1) == doctest::Approx(1.0).epsilon(1e-9));
  auto standard = k::batch_norm_train(Tensor::from(Shape{4, 1}, {-1, 1, -1, 1}), gamma, Tensor(Shape{1}), 1e-12);
  for (std::size_t i = 0; i < 4; ++i) CHECK(standard.out.at(i) == doctest::Approx(i % 2 == 0 ? -1.0 : 1.0));
  // Inference uses supplied running statistics.
  auto inf = k::batch_norm_inference(Tensor::from(Shape{1, 1}, {4.0}), gamma, Tensor(Shape{1}), Tensor::full(Shape{1}, 2.0),
                                     Tensor::full(Shape{1}, 4.0), 0.0);
  CHECK(inf.item() == doctest::Approx(1.0));
  CHECK(k::moving_average(Tensor::full(Shape{1}, 1.0), Tensor::full(Shape{1}, 0.0), 0.99).item() == doctest::Approx(0.99));
}

TEST_CASE("dropout") {
  Rng rng(11, 0);
  const Tensor x = Tensor::full(Shape{100000}, 1.0);
  CHECK(k::dropout(x, 1.0, rng).out.identical(x));
  auto half = k::dropout(x, 0.5, rng);
  CHECK(k::sum(half.out) / 1e5 == doctest::Approx(1.0).epsilon(0.01));
  for (std::size_t i = 0; i < 100; ++i) CHECK((half.out.at(i) == 0.0 || half.out.at(i) == 2.0));
  CHECK_THROWS_AS(k::dropout(x, 0.0, rng), ConfigError);
}

TEST_CASE("softmax cross entropy") {
  {
    PrecisionScope precision(DType::f64);
    auto zero = k::softmax_cross_entropy(Tensor(Shape{3, 10}), {0, 4, 9});
    CHECK(std::abs(zero.loss - std::log(10.0)) < 1e-12);
    // Ties resolve to the lowest class index.
    CHECK(zero.predictions == std::vector<std::size_t>{0, 0, 0});
    CHECK(zero.accuracy == doctest::Approx(1.0 / 3.0));
  }
  auto confident = k::softmax_cross_entropy(Tensor::from(Shape{1, 3}, {50, 0, 0}), {0});
  CHECK(confident.loss < 1e-10);
  CHECK(confident.accuracy == 1.0);
  auto huge = k::softmax_cross_entropy(Tensor::from(Shape{1, 2}, {1e6, 0}), {1});
  CHECK(std::isfinite(huge.loss));
  CHECK(huge.loss == doctest::Approx(1e6));
  CHECK_THROWS_AS(k::softmax_cross_entropy(Tensor(Shape{1, 2}), {2}), ShapeError);
  CHECK_THROWS_AS(k::softmax_cross_entropy(Tensor(Shape{2, 2}), {0}), ShapeError);
}

TEST_CASE("add") {
  CHECK(k::add(Tensor::from(Shape{2}, {1, 2}), Tensor::from(Shape{2}, {3, 4})).to_vector() == std::vector<double>{4, 6});
  Rng rng(5, 5);
  PrecisionScope precision(DType::f64);
  const Tensor a = gradsuite::random_tensor(rng, Shape{3, 4}), b = gradsuite::random_tensor(rng, Shape{3, 4});
  CHECK(k::add(a, Tensor(Shape{3, 4})).identical(a));
  CHECK(k::add(a, b).identical(k::add(b, a)));
  CHECK_THROWS_AS(k::add(a, Tensor(Shape{4, 3})), ShapeError);
}

TEST_CASE("gemm variants agree with the naive triple loop") {
  Rng rng(2, 2);
  const std::size_t m = 7, n = 5, kk = 6;
  std::vector<double> a(m * kk), b(kk * n), c(m * n), at(kk * m), bt(n * kk);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  std::vector<double> ref(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) ref[i * n + j] += a[i * kk + p] * b[p * n + j];
  k::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]));
  // A^T stored as [K,M]; gemm_tn computes (A^T)^T * B = A * B with A given as rows of length M.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
  k::gemm_tn(kk, n, m, at.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]));
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];
  k::gemm_nt(m, kk, n, a.data(), bt.data(), c.data(), false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]));
}

TEST_CASE("backward basics") {
  PrecisionScope precision(DType::f64);
  SUBCASE("relu backward") {
    Variable x = Variable::parameter(Tensor::from(Shape{2}, {-1, 2}));
    Tape tape;
    Variable y;
    {
      TapeScope scope(tape);
      y = ops::weighted_sum(ops::relu(x), Tensor::full(Shape{2}, 1.0));
    }
    CHECK(tape.backward(y).of(x).to_vector() == std::vector<double>{0, 1});
  }
  SUBCASE("add passes upstream to both inputs") {
    Variable a = Variable::parameter(Tensor::from(Shape{2}, {1, 2}));
    Variable b = Variable::parameter(Tensor::from(Shape{2}, {3, 4}));
    Tape tape;
    Variable y;
    {
      TapeScope scope(tape);
      y = ops::add(a, b);
    }
    const Tensor upstream = Tensor::from(Shape{2}, {0.5, -2});
    const Gradients g = tape.backward(y, upstream);
    CHECK(g.of(a).identical(upstream));
    CHECK(g.of(b).identical(upstream));
  }
  SUBCASE("a tensor consumed twice gets the sum of contributions") {
    Variable x = Variable::parameter(Tensor::from(Shape{3}, {1, -2, 3}));
    Tape tape;
    Variable y;
    {
      TapeScope scope(tape);
      y = ops::sum(ops::add(x, x));
    }
    CHECK(tape.backward(y).of(x).to_vector() == std::vector<double>{2, 2, 2});
  }
  SUBCASE("no tape, no graph") {
    Variable x = Variable::parameter(Tensor::from(Shape{1}, {1}));
    Variable y = ops::relu(x);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("check_gradient utility") {
  PrecisionScope precision(DType::f64);
  const ScalarFn square = [](std::span<const Variable> in) {
    return ops::weighted_sum(in[0], in[0].value());  // x * x with x held constant on one side
  };
  // f(x) = x^2 built from two tape uses of x.
  const ScalarFn x_squared = [](std::span<const Variable> in) {
    Variable sq = make_op("square", k::multiply(in[0].value(), in[0].value()), {in[0]}, [x = in[0]](const Tensor& g) {
      return std::vector<Tensor>{k::scale(k::multiply(g, x.value()), 2.0)};
    });
    return ops::sum(sq);
  };
  CHECK(check_gradient(x_squared, {Tensor::full(Shape{1}, 3.0)}) < 1e-8);
  auto report = check_gradient_report(x_squared, {Tensor::full(Shape{1}, 3.0)});
  CHECK(report.analytic[0].item() == doctest::Approx(6.0));
  const ScalarFn constant = [](std::span<const Variable> in) {
    return ops::weighted_sum(in[0], Tensor(in[0].shape(), DType::f64));
  };
  auto flat = check_gradient_report(constant, {Tensor::full(Shape{3}, 1.0)});
  CHECK(flat.max_relative_error == 0.0);
  CHECK(flat.analytic[0].to_vector() == std::vector<double>(3, 0.0));
  // The first lambda is deliberately wrong (treats one factor as constant): the checker must notice.
  CHECK(check_gradient(square, {Tensor::full(Shape{1}, 3.0)}) > 0.1);
}

TEST_CASE("every kernel passes finite differences on 20 random instances") {
  for (const auto& kind : gradsuite::kinds()) {
    CAPTURE(kind);
    CHECK(gradsuite::worst_error(kind, 20, 1234) <= 1e-4);
  }
}

TEST_CASE("deterministic replay") {
  auto run = [] {
    Rng rng(99, 7);
    Tensor x = gradsuite::random_tensor(rng, Shape{2, 5, 5, 2});
    Tensor kernel = gradsuite::random_tensor(rng, Shape{3, 3, 2, 4});
    Tensor y = k::conv2d(x.cast(DType::f32), kernel.cast(DType::f32), Tensor(Shape{4}), 1, 1, k::Padding::same);
    return k::dropout(y, 0.5, rng).out;
  };
  CHECK(run().identical(run()));
}
