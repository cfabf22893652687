#pragma once

#include <cstddef>

#include "orthonet/tensor.hpp"

namespace orthonet {

/// A bank of M convolution kernels of size kW x kH x C viewed as an
/// f_in x f_out matrix (f_in = kW*kH*C, f_out = M). Column j holds the
/// flattened kernel of output channel j; row index = (c * kH + y) * kW + x,
/// which matches the im2col patch layout of an NCHW input.
class KernelMatrix {
 public:
  KernelMatrix() = default;
  KernelMatrix(std::size_t kw, std::size_t kh, std::size_t channels, std::size_t outputs);
  KernelMatrix(std::size_t kw, std::size_t kh, std::size_t channels, std::size_t outputs,
               Tensor values);

  std::size_t kw() const { return kw_; }
  std::size_t kh() const { return kh_; }
  std::size_t channels() const { return channels_; }
  std::size_t outputs() const { return outputs_; }
  std::size_t f_in() const { return kw_ * kh_ * channels_; }
  std::size_t f_out() const { return outputs_; }

  const Tensor& matrix() const { return values_; }
  Tensor& matrix() { return values_; }

  std::size_t row(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * kh_ + y) * kw_ + x;
  }
  double weight(std::size_t m, std::size_t c, std::size_t y, std::size_t x) const {
    return values_.at(row(c, y, x), m);
  }

  /// 4-D view with shape (kW, kH, C, M).
  Tensor to_tensor() const;
  static KernelMatrix from_tensor(const Tensor& t);

  bool operator==(const KernelMatrix& other) const = default;

 private:
  std::size_t kw_ = 0, kh_ = 0, channels_ = 0, outputs_ = 0;
  Tensor values_;
};

}  // namespace orthonet
