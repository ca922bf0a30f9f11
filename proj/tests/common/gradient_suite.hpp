#pragma once

// Randomized finite-difference checks for every differentiable kernel.
// Shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "akid/gradcheck.hpp"
#include "akid/ops.hpp"
#include "akid/rng.hpp"

namespace gradsuite {

using akid::Rng;
using akid::Shape;
using akid::Tensor;
using akid::Variable;

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape, akid::DType::f64);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

// Values spaced far apart relative to the finite-difference step, in random
// order, so max/relu selections do not flip under perturbation.
inline Tensor separated_tensor(Rng& rng, const Shape& shape) {
  Tensor t(shape, akid::DType::f64);
  std::vector<std::size_t> order(t.numel());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
  // Half-integer multiples of the spacing: never within 0.015 of zero.
  const double offset = static_cast<double>(t.numel() / 2);
  for (std::size_t i = 0; i < order.size(); ++i) {
    t.set(order[i], (static_cast<double>(i) - offset + 0.5) * 0.05 + rng.uniform(-0.01, 0.01));
  }
  return t;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.below(static_cast<std::uint32_t>(hi - lo + 1));
}

struct Case {
  akid::ScalarFn fn;
  std::vector<Tensor> point;
};

// One random instance of the named kernel's gradient check.
inline Case make_case(const std::string& kind, Rng& rng) {
  namespace k = akid::kernels;
  namespace ops = akid::ops;
  if (kind == "conv") {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 3, 6), w = pick(rng, 3, 6), cin = pick(rng, 1, 3),
                      cout = pick(rng, 1, 3), kh = pick(rng, 1, 3), kw = pick(rng, 1, 3), sh = pick(rng, 1, 2),
                      sw = pick(rng, 1, 2);
    const auto padding = rng.bernoulli(0.5) ? k::Padding::same : k::Padding::valid;
    Tensor x = random_tensor(rng, Shape{n, h, w, cin});
    Tensor kernel = random_tensor(rng, Shape{kh, kw, cin, cout});
    Tensor bias = random_tensor(rng, Shape{cout});
    const std::size_t oh = k::axis_geometry(h, kh, sh, padding, "h").out;
    const std::size_t ow = k::axis_geometry(w, kw, sw, padding, "w").out;
    Tensor r = random_tensor(rng, Shape{n, oh, ow, cout});
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::conv2d(in[0], in[1], in[2], sh, sw, padding), r); },
            {x, kernel, bias}};
  }
  if (kind == "pool") {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 2, 6), w = pick(rng, 2, 6), c = pick(rng, 1, 3);
    k::Window2d win{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3),
                    rng.bernoulli(0.5) ? k::Padding::same : k::Padding::valid};
    if (win.padding == k::Padding::valid) {
      win.kh = std::min(win.kh, h);
      win.kw = std::min(win.kw, w);
    }
    Tensor x = separated_tensor(rng, Shape{n, h, w, c});
    const std::size_t oh = k::axis_geometry(h, win.kh, win.sh, win.padding, "h").out;
    const std::size_t ow = k::axis_geometry(w, win.kw, win.sw, win.padding, "w").out;
    Tensor r = random_tensor(rng, Shape{n, oh, ow, c});
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::maxpool2d(in[0], win), r); }, {x}};
  }
  if (kind == "relu") {
    const Shape shape{pick(rng, 1, 3), pick(rng, 1, 5)};
    Tensor x = separated_tensor(rng, shape);
    Tensor r = random_tensor(rng, shape);
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::relu(in[0]), r); }, {x}};
  }
  if (kind == "maxout") {
    const std::size_t g = pick(rng, 1, 3), groups = pick(rng, 1, 3);
    const Shape shape{pick(rng, 1, 3), pick(rng, 1, 3), g * groups};
    Tensor x = separated_tensor(rng, shape);
    Tensor r = random_tensor(rng, Shape{shape[0], shape[1], groups});
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::maxout(in[0], g), r); }, {x}};
  }
  if (kind == "inner_product") {
    const std::size_t n = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 1, 3), c = pick(rng, 1, 2),
                      out = pick(rng, 1, 4);
    Tensor x = random_tensor(rng, Shape{n, h, w, c});
    Tensor weight = random_tensor(rng, Shape{h * w * c, out});
    Tensor bias = random_tensor(rng, Shape{out});
    Tensor r = random_tensor(rng, Shape{n, out});
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::inner_product(in[0], in[1], in[2]), r); },
            {x, weight, bias}};
  }
  if (kind == "batch_norm") {
    const Shape shape{pick(rng, 2, 4), pick(rng, 1, 3), pick(rng, 1, 3)};
    Tensor x = random_tensor(rng, shape, -2.0, 2.0);
    Tensor gamma = random_tensor(rng, Shape{shape[2]}, 0.5, 1.5);
    Tensor beta = random_tensor(rng, Shape{shape[2]});
    Tensor r = random_tensor(rng, shape);
    return {[=](std::span<const Variable> in) {
              return ops::weighted_sum(ops::batch_norm_train(in[0], in[1], in[2], 1e-5), r);
            },
            {x, gamma, beta}};
  }
  if (kind == "softmax_xent") {
    const std::size_t n = pick(rng, 1, 4), classes = pick(rng, 2, 6);
    Tensor logits = random_tensor(rng, Shape{n, classes}, -3.0, 3.0);
    std::vector<std::int64_t> labels(n);
    for (auto& l : labels) l = rng.below(static_cast<std::uint32_t>(classes));
    return {[=](std::span<const Variable> in) { return ops::softmax_cross_entropy(in[0], labels).loss; }, {logits}};
  }
  if (kind == "add") {
    const Shape shape{pick(rng, 1, 3), pick(rng, 1, 4)};
    Tensor a = random_tensor(rng, shape), b = random_tensor(rng, shape), r = random_tensor(rng, shape);
    return {[=](std::span<const Variable> in) { return ops::weighted_sum(ops::add(in[0], in[1]), r); }, {a, b}};
  }
  if (kind == "weight_decay") {
    const Shape shape{pick(rng, 1, 4), pick(rng, 1, 4)};
    Tensor w = random_tensor(rng, shape);
    const double scale = rng.uniform(1e-4, 1.0);
    return {[=](std::span<const Variable> in) { return ops::l2_loss(in[0], scale); }, {w}};
  }
  throw std::invalid_argument("unknown kernel kind " + kind);
}

inline const std::vector<std::string>& kinds() {
  static const std::vector<std::string> all{"conv",         "pool", "relu", "maxout", "inner_product", "batch_norm",
                                            "softmax_xent", "add",  "weight_decay"};
  return all;
}

// Worst relative error over `cases` random instances of `kind`.
inline double worst_error(const std::string& kind, std::size_t cases, std::uint64_t seed) {
  akid::PrecisionScope precision(akid::DType::f64);
  Rng rng(seed, akid::hash_name(kind));
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    Case c = make_case(kind, rng);
    worst = std::max(worst, akid::check_gradient(c.fn, c.point, 1e-3));
  }
  return worst;
}

}  // namespace gradsuite
