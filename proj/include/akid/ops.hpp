#pragma once

#include <cstdint>
#include <vector>

#include "akid/autodiff.hpp"
#include "akid/kernels.hpp"

// Differentiable wrappers over the kernels. Each op registers the exact
// vector-Jacobian product of its kernel on the active tape.
namespace akid::ops {

Variable conv2d(const Variable& x, const Variable& kernel, const Variable& bias, std::size_t stride_h,
                std::size_t stride_w, kernels::Padding padding);
Variable maxpool2d(const Variable& x, const kernels::Window2d& window);
Variable relu(const Variable& x);
Variable maxout(const Variable& x, std::size_t group_size);
Variable inner_product(const Variable& x, const Variable& weight, const Variable& bias);

struct BatchStatistics {
  Tensor mean;
  Tensor var;
};
// Normalizes with batch statistics; the statistics are reported through `stats`.
Variable batch_norm_train(const Variable& x, const Variable& gamma, const Variable& beta, double epsilon,
                          BatchStatistics* stats = nullptr);
Variable batch_norm_inference(const Variable& x, const Variable& gamma, const Variable& beta, const Tensor& running_mean,
                              const Tensor& running_var, double epsilon);

Variable dropout(const Variable& x, double keep_prob, Rng& rng);

struct SoftmaxLoss {
  Variable loss;  // scalar batch mean
  Tensor probabilities;
  std::vector<std::size_t> predictions;
  double accuracy = 0.0;
};
SoftmaxLoss softmax_cross_entropy(const Variable& logits, const std::vector<std::int64_t>& labels);

Variable add(const Variable& a, const Variable& b);
// scale * sum(w^2)
Variable l2_loss(const Variable& weight, double scale);
// sum(x * weights) as a scalar; used to reduce tensors for gradient checks.
Variable weighted_sum(const Variable& x, const Tensor& weights);
Variable sum(const Variable& x);

}  // namespace akid::ops
