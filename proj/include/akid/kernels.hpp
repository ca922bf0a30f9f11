#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "akid/rng.hpp"
#include "akid/tensor.hpp"

// Forward numeric kernels over NHWC tensors and their vector-Jacobian
// products. Everything here is a pure function of its arguments.
namespace akid::kernels {

enum class Padding { same, valid };

Padding parse_padding(std::string_view text);
const char* to_string(Padding padding);

struct Window2d {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t sh = 1;
  std::size_t sw = 1;
  Padding padding = Padding::same;
};

// Output extent and padding along one spatial axis.
//   SAME:  out = ceil(in / stride), total pad split (floor, ceil) on (lead, trail)
//   VALID: out = floor((in - k) / stride) + 1, no padding
struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_lead = 0;
  std::size_t pad_trail = 0;
};

AxisGeometry axis_geometry(std::size_t in, std::size_t k, std::size_t stride, Padding padding, std::string_view axis);

// --- convolution (cross-correlation, no kernel flip) ---
// x [N,H,W,Cin], kernel [kh,kw,Cin,Cout], bias [Cout]
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride_h, std::size_t stride_w,
              Padding padding);

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernel;
  Tensor dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, std::size_t stride_h,
                            std::size_t stride_w, Padding padding);

// --- max pooling; padded cells are -inf and never win ---
struct MaxPoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};
MaxPoolResult maxpool2d(const Tensor& x, const Window2d& window);
Tensor maxpool2d_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor& dy);

// --- activations ---
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

struct MaxoutResult {
  Tensor out;
  std::vector<std::size_t> argmax;
};
// Max over consecutive groups of `group_size` along the last axis.
MaxoutResult maxout(const Tensor& x, std::size_t group_size);
Tensor maxout_backward(const Shape& x_shape, const std::vector<std::size_t>& argmax, const Tensor& dy);

// --- inner product; x is flattened to [N, D] ---
Tensor inner_product(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct InnerProductGrads {
  Tensor dx;  // shaped like x
  Tensor dweight;
  Tensor dbias;
};
InnerProductGrads inner_product_backward(const Tensor& x, const Tensor& weight, const Tensor& dy);

// --- batch normalization over every axis except the last (channels) ---
struct BatchNormTrainResult {
  Tensor out;
  Tensor mean;     // [C]
  Tensor var;      // [C], biased batch variance
  Tensor xhat;     // normalized input
  Tensor inv_std;  // [C]
};
BatchNormTrainResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon);
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                            const Tensor& running_var, double epsilon);

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};
BatchNormGrads batch_norm_backward(const Tensor& xhat, const Tensor& inv_std, const Tensor& gamma, const Tensor& dy);

// running <- momentum * running + (1 - momentum) * batch
Tensor moving_average(const Tensor& running, const Tensor& batch, double momentum);

// --- inverted dropout ---
struct DropoutResult {
  Tensor out;
  Tensor mask;  // 0 or 1/keep_prob per element
};
DropoutResult dropout(const Tensor& x, double keep_prob, Rng& rng);

// --- softmax cross entropy with integer labels ---
struct SoftmaxXentResult {
  double loss = 0.0;  // mean over the batch
  Tensor probabilities;
  std::vector<std::size_t> predictions;  // argmax, ties to the lowest class
  double accuracy = 0.0;
};
SoftmaxXentResult softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);
// Gradient of the mean loss scaled by `upstream`.
Tensor softmax_cross_entropy_backward(const Tensor& probabilities, const std::vector<std::int64_t>& labels,
                                      double upstream);

// Labels carried in a tensor (one integer-valued element per example).
std::vector<std::int64_t> labels_from_tensor(const Tensor& labels);

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
// In-place accumulate: acc += x.
void accumulate(Tensor& acc, const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor multiply(const Tensor& a, const Tensor& b);
double sum(const Tensor& x);
double sum_squares(const Tensor& x);

// Dense row-major matrix products used by the kernels above; exposed for tests.
// C[M,N] (+)= A[M,K] * B[K,N]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
// C[K,N] (+)= A[M,K]^T * B[M,N]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
// C[M,K] (+)= A[M,N] * B[K,N]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace akid::kernels
