#include "akid/ops.hpp"

#include <cmath>

namespace akid::ops {

namespace k = akid::kernels;

Variable conv2d(const Variable& x, const Variable& kernel, const Variable& bias, std::size_t stride_h,
                std::size_t stride_w, k::Padding padding) {
  Tensor out = k::conv2d(x.value(), kernel.value(), bias.value(), stride_h, stride_w, padding);
  return make_op("conv2d", std::move(out), {x, kernel, bias}, [x, kernel, stride_h, stride_w, padding](const Tensor& g) {
    auto grads = k::conv2d_backward(x.value(), kernel.value(), g, stride_h, stride_w, padding);
    return std::vector<Tensor>{std::move(grads.dx), std::move(grads.dkernel), std::move(grads.dbias)};
  });
}

Variable maxpool2d(const Variable& x, const k::Window2d& window) {
  auto result = k::maxpool2d(x.value(), window);
  return make_op("maxpool2d", std::move(result.out), {x},
                 [shape = x.shape(), argmax = std::move(result.argmax)](const Tensor& g) {
                   return std::vector<Tensor>{k::maxpool2d_backward(shape, argmax, g)};
                 });
}

Variable relu(const Variable& x) {
  return make_op("relu", k::relu(x.value()), {x},
                 [x](const Tensor& g) { return std::vector<Tensor>{k::relu_backward(x.value(), g)}; });
}

Variable maxout(const Variable& x, std::size_t group_size) {
  auto result = k::maxout(x.value(), group_size);
  return make_op("maxout", std::move(result.out), {x},
                 [shape = x.shape(), argmax = std::move(result.argmax)](const Tensor& g) {
                   return std::vector<Tensor>{k::maxout_backward(shape, argmax, g)};
                 });
}

Variable inner_product(const Variable& x, const Variable& weight, const Variable& bias) {
  return make_op("inner_product", k::inner_product(x.value(), weight.value(), bias.value()), {x, weight, bias},
                 [x, weight](const Tensor& g) {
                   auto grads = k::inner_product_backward(x.value(), weight.value(), g);
                   return std::vector<Tensor>{std::move(grads.dx), std::move(grads.dweight), std::move(grads.dbias)};
                 });
}

Variable batch_norm_train(const Variable& x, const Variable& gamma, const Variable& beta, double epsilon,
                          BatchStatistics* stats) {
  auto result = k::batch_norm_train(x.value(), gamma.value(), beta.value(), epsilon);
  if (stats != nullptr) {
    stats->mean = result.mean;
    stats->var = result.var;
  }
  return make_op("batch_norm", std::move(result.out), {x, gamma, beta},
                 [gamma, xhat = std::move(result.xhat), inv_std = std::move(result.inv_std)](const Tensor& g) {
                   auto grads = k::batch_norm_backward(xhat, inv_std, gamma.value(), g);
                   return std::vector<Tensor>{std::move(grads.dx), std::move(grads.dgamma), std::move(grads.dbeta)};
                 });
}

Variable batch_norm_inference(const Variable& x, const Variable& gamma, const Variable& beta, const Tensor& running_mean,
                              const Tensor& running_var, double epsilon) {
  Tensor out = k::batch_norm_inference(x.value(), gamma.value(), beta.value(), running_mean, running_var, epsilon);
  // Affine in x with fixed statistics.
  return make_op("batch_norm_inference", std::move(out), {x, gamma, beta},
                 [x, gamma, running_mean, running_var, epsilon](const Tensor& g) {
                   const std::size_t c = running_mean.numel();
                   const std::size_t rows = x.value().numel() / c;
                   Tensor dx(x.shape(), x.value().dtype());
                   Tensor dgamma(Shape{c}, x.value().dtype());
                   Tensor dbeta(Shape{c}, x.value().dtype());
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     const double inv = 1.0 / std::sqrt(running_var.at(ch) + epsilon);
                     double sg = 0.0, sb = 0.0;
                     for (std::size_t i = 0; i < rows; ++i) {
                       const std::size_t idx = i * c + ch;
                       dx.set(idx, g.at(idx) * gamma.value().at(ch) * inv);
                       sg += g.at(idx) * (x.value().at(idx) - running_mean.at(ch)) * inv;
                       sb += g.at(idx);
                     }
                     dgamma.set(ch, sg);
                     dbeta.set(ch, sb);
                   }
                   return std::vector<Tensor>{std::move(dx), std::move(dgamma), std::move(dbeta)};
                 });
}

Variable dropout(const Variable& x, double keep_prob, Rng& rng) {
  auto result = k::dropout(x.value(), keep_prob, rng);
  return make_op("dropout", std::move(result.out), {x}, [mask = std::move(result.mask)](const Tensor& g) {
    return std::vector<Tensor>{k::multiply(g, mask)};
  });
}

SoftmaxLoss softmax_cross_entropy(const Variable& logits, const std::vector<std::int64_t>& labels) {
  auto result = k::softmax_cross_entropy(logits.value(), labels);
  SoftmaxLoss out;
  out.probabilities = result.probabilities;
  out.predictions = std::move(result.predictions);
  out.accuracy = result.accuracy;
  out.loss = make_op("softmax_cross_entropy", Tensor::scalar(result.loss, logits.value().dtype()), {logits},
                     [probs = std::move(result.probabilities), labels](const Tensor& g) {
                       return std::vector<Tensor>{k::softmax_cross_entropy_backward(probs, labels, g.item())};
                     });
  return out;
}

Variable add(const Variable& a, const Variable& b) {
  return make_op("add", k::add(a.value(), b.value()), {a, b},
                 [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Variable l2_loss(const Variable& weight, double scale) {
  const double value = scale * k::sum_squares(weight.value());
  return make_op("l2_loss", Tensor::scalar(value, weight.value().dtype()), {weight}, [weight, scale](const Tensor& g) {
    return std::vector<Tensor>{k::scale(weight.value(), 2.0 * scale * g.item())};
  });
}

Variable weighted_sum(const Variable& x, const Tensor& weights) {
  if (weights.shape() != x.shape()) throw ShapeError("weighted_sum: weights shape mismatch");
  const double value = k::sum(k::multiply(x.value(), weights.cast(x.value().dtype())));
  return make_op("weighted_sum", Tensor::scalar(value, x.value().dtype()), {x},
                 [w = weights.cast(x.value().dtype())](const Tensor& g) {
                   return std::vector<Tensor>{k::scale(w, g.item())};
                 });
}

Variable sum(const Variable& x) {
  return make_op("sum", Tensor::scalar(k::sum(x.value()), x.value().dtype()), {x}, [shape = x.shape(), dt = x.value().dtype()](const Tensor& g) {
    return std::vector<Tensor>{Tensor::full(shape, g.item(), dt)};
  });
}

}  // namespace akid::ops
