#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "orthonet/tensor.hpp"

namespace orthonet {

/// Plain or residual CIFAR network: conv(3 -> c1), then 6n 3x3 Conv-BN-ReLU
/// layers in three stages of 2n, global average pool, FC.
struct NetworkSpec {
  std::size_t n = 7;
  std::array<std::size_t, 3> channels{16, 32, 64};
  bool residual = false;
  std::size_t num_classes = 10;
  std::array<std::size_t, 3> input{3, 32, 32};
};

enum class NodeKind { Conv, BatchNorm, Relu, GlobalAvgPool, Fc, Add };

std::string to_string(NodeKind kind);

inline constexpr std::size_t kGraphInput = std::numeric_limits<std::size_t>::max();

struct LayerNode {
  NodeKind kind = NodeKind::Relu;
  std::string name;
  std::vector<std::size_t> inputs;  // producer node indices, kGraphInput for the network input

  // Conv: kernel kw x kh, in_channels -> out_channels. Fc: in_channels = f_in, out_channels = f_out.
  // BatchNorm: in_channels = out_channels = channel count.
  std::size_t kw = 0, kh = 0;
  std::size_t in_channels = 0, out_channels = 0;
  std::size_t stride = 1, pad = 0;
  bool shortcut = false;  // part of a projection shortcut

  bool parametric() const { return kind == NodeKind::Conv || kind == NodeKind::Fc; }
  bool operator==(const LayerNode&) const = default;
};

/// Nodes in topological order; the last node produces the logits.
struct LayerGraph {
  std::vector<LayerNode> nodes;
  Shape input{3, 32, 32};  // C, H, W

  std::size_t parametric_count() const;
  std::size_t shortcut_count() const;  // number of residual additions
  std::size_t projection_count() const;

  /// Drops every Add node and every projection-shortcut node and rewires
  /// consumers to the trunk.
  LayerGraph without_shortcuts() const;

  bool operator==(const LayerGraph&) const = default;
};

LayerGraph build_plain(std::size_t n, const std::array<std::size_t, 3>& channels,
                       std::size_t classes);
LayerGraph build_residual(std::size_t n, const std::array<std::size_t, 3>& channels,
                          std::size_t classes);
LayerGraph build(const NetworkSpec& spec);

struct FanReport {
  std::string name;
  NodeKind kind = NodeKind::Conv;
  std::size_t f_in = 0, f_out = 0;
  bool groupwise = false;  // f_in < f_out
  std::size_t groups = 1;
};

struct ValidationReport {
  std::vector<FanReport> layers;  // every parametric layer, in order
  std::vector<std::string> warnings;
  Shape output;  // per-sample output shape
  std::size_t parametric_layers = 0;

  std::size_t groupwise_count() const;
};

/// Symbolic forward over the graph; throws ValidationError naming the first
/// inconsistent layer.
ValidationReport validate(const LayerGraph& graph);
ValidationReport validate(const NetworkSpec& spec);

}  // namespace orthonet
