#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orthonet/kernel_matrix.hpp"
#include "orthonet/tensor.hpp"

namespace orthonet {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no bias: a BN layer always follows).

struct ConvLayer {
  KernelMatrix kernel;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Output shape of conv_forward for an NCHW input. Spatial extents use the
/// floor convention (in + 2*pad - k) / stride + 1.
Shape conv_output_shape(const ConvLayer& layer, const Shape& input);

Tensor conv_forward(const ConvLayer& layer, const Tensor& x);

struct ConvGrads {
  Tensor dx;
  Tensor dw;  // f_in x f_out, same layout as the kernel matrix
};

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& x, const Tensor& d_out);

// ---------------------------------------------------------------------------
// Batch normalization, statistics per channel over batch x spatial positions.
// Rank-2 inputs [N, C] are treated as 1x1 spatial maps.

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  Tensor mu_b;   // batch mean
  Tensor var_b;  // biased batch variance
  Tensor x_hat;  // normalized activations of the last training forward
  Tensor running_mu;
  Tensor running_var;
  bool has_cache = false;
};

BatchNormState make_batch_norm(std::size_t channels, double eps = 1e-5, double momentum = 0.9);

Tensor bn_forward(BatchNormState& state, const Tensor& x, bool training);

struct BnGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

/// dX_i = (delta_i - mean(delta) - x_hat_i/m * sum_j delta_j x_hat_j) / sqrt(var_B + eps)
/// with delta_i = dY_i * gamma. Requires a cached training forward.
BnGrads bn_backward(const BatchNormState& state, const Tensor& dy);

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// ---------------------------------------------------------------------------
// Fully connected head: y = x W + b, W is f_in x f_out.

struct FcLayer {
  Tensor weight;
  Tensor bias;
};

FcLayer make_fc(std::size_t f_in, std::size_t f_out);

Tensor fc_forward(const FcLayer& layer, const Tensor& x);

struct FcGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

FcGrads fc_backward(const FcLayer& layer, const Tensor& x, const Tensor& dy);

// ---------------------------------------------------------------------------

struct SoftmaxXent {
  double loss = 0.0;  // mean over the batch
  Tensor d_logits;    // (softmax - onehot) / batch
};

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels);

Tensor softmax(const Tensor& logits);

/// [N, C, H, W] -> [N, C]
Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy);

}  // namespace orthonet
