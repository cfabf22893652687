#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "orthonet/layers.hpp"
#include "orthonet/modulation.hpp"
#include "orthonet/netbuilder.hpp"
#include "orthonet/ortho_init.hpp"
#include "orthonet/rng.hpp"

namespace orthonet {

enum class InitKind { Ortho, Msra, Gaussian };

std::string to_string(InitKind kind);
InitKind parse_init_kind(const std::string& name);

struct InitConfig {
  InitKind kind = InitKind::Msra;
  double gaussian_std = 0.01;
};

/// A trainable tensor together with its gradient buffer.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool regularized = false;  // conv kernels and the FC weight
  GroupPartition partition;  // column groups of a regularized weight matrix
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Executes a LayerGraph. Owns the parameters, their gradients and the
/// activations of the last forward pass.
class Network {
 public:
  Network(LayerGraph graph, const InitConfig& init, Rng& rng, double bn_eps = 1e-5,
          double bn_momentum = 0.9);

  /// x: [N, C, H, W]. Returns logits [N, classes].
  Tensor forward(const Tensor& x, bool training);

  /// Called once per parametric layer, top-down, with the error tensor that is
  /// about to enter that layer's backward pass. `index` counts parametric
  /// layers bottom-up. The hook may modify the error in place.
  using ErrorHook = std::function<void(std::size_t index, Tensor& error)>;

  /// Backpropagates d_logits; parameter gradients are overwritten.
  /// Returns the gradient with respect to the network input.
  Tensor backward(const Tensor& d_logits, const ErrorHook& hook = {});

  std::vector<ParamRef> parameters();
  std::vector<ParametricKind> parametric_kinds() const;
  /// f_in x f_out matrices of every parametric layer, bottom-up.
  std::vector<const Tensor*> weight_matrices() const;
  std::vector<const Tensor*> conv_matrices() const;
  const KernelMatrix& first_conv() const;

  /// Parameters and BN running statistics, in a fixed order. Conv kernels are
  /// stored as (kW, kH, C, M) tensors.
  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> tensors);

  const LayerGraph& graph() const { return graph_; }
  std::size_t parametric_count() const { return parametric_.size(); }

 private:
  struct ConvUnit {
    ConvLayer layer;
    Tensor dw;
  };
  struct BnUnit {
    BatchNormState state;
    Tensor dgamma, dbeta;
  };
  struct FcUnit {
    FcLayer layer;
    Tensor dw, db;
  };
  struct Stateless {};
  using Unit = std::variant<Stateless, ConvUnit, BnUnit, FcUnit>;

  const Tensor& input_of(std::size_t node, std::size_t k) const;

  LayerGraph graph_;
  std::vector<Unit> units_;
  std::vector<std::size_t> parametric_;  // node indices of parametric layers
  std::vector<Tensor> outputs_;
  Tensor input_;
};

/// Top-1 accuracy of argmax(logits) against labels.
double top1_accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace orthonet
