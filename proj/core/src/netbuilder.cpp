#include "orthonet/netbuilder.hpp"

#include <algorithm>

#include "orthonet/errors.hpp"
#include "orthonet/ortho_init.hpp"

namespace orthonet {

std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Conv: return "conv";
    case NodeKind::BatchNorm: return "bn";
    case NodeKind::Relu: return "relu";
    case NodeKind::GlobalAvgPool: return "gap";
    case NodeKind::Fc: return "fc";
    case NodeKind::Add: return "add";
  }
  return "?";
}

std::size_t LayerGraph::parametric_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const LayerNode& n) { return n.parametric(); }));
}

std::size_t LayerGraph::shortcut_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(), [](const LayerNode& n) { return n.kind == NodeKind::Add; }));
}

std::size_t LayerGraph::projection_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const LayerNode& n) {
    return n.shortcut && n.kind == NodeKind::Conv;
  }));
}

LayerGraph LayerGraph::without_shortcuts() const {
  // remap[i] = index in the new graph of the node that now stands in for node i.
  std::vector<std::size_t> remap(nodes.size(), kGraphInput);
  LayerGraph out;
  out.input = input;
  auto resolve = [&](std::size_t i) { return i == kGraphInput ? kGraphInput : remap[i]; };
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LayerNode& n = nodes[i];
    if (n.shortcut) continue;
    if (n.kind == NodeKind::Add) {
      remap[i] = resolve(n.inputs.at(0));
      continue;
    }
    LayerNode copy = n;
    for (auto& in : copy.inputs) in = resolve(in);
    remap[i] = out.nodes.size();
    out.nodes.push_back(std::move(copy));
  }
  return out;
}

namespace {

class GraphWriter {
 public:
  explicit GraphWriter(LayerGraph& g) : g_(g) {}

  std::size_t conv(const std::string& name, std::size_t from, std::size_t in, std::size_t out,
                   std::size_t stride, bool shortcut = false) {
    LayerNode n;
    n.kind = NodeKind::Conv;
    n.name = name;
    n.inputs = {from};
    n.kw = n.kh = 3;
    n.in_channels = in;
    n.out_channels = out;
    n.stride = stride;
    n.pad = 1;
    n.shortcut = shortcut;
    return push(std::move(n));
  }
  std::size_t bn(const std::string& name, std::size_t from, std::size_t channels,
                 bool shortcut = false) {
    LayerNode n;
    n.kind = NodeKind::BatchNorm;
    n.name = name;
    n.inputs = {from};
    n.in_channels = n.out_channels = channels;
    n.shortcut = shortcut;
    return push(std::move(n));
  }
  std::size_t simple(NodeKind kind, const std::string& name, std::vector<std::size_t> from) {
    LayerNode n;
    n.kind = kind;
    n.name = name;
    n.inputs = std::move(from);
    return push(std::move(n));
  }
  std::size_t fc(const std::string& name, std::size_t from, std::size_t in, std::size_t out) {
    LayerNode n;
    n.kind = NodeKind::Fc;
    n.name = name;
    n.inputs = {from};
    n.in_channels = in;
    n.out_channels = out;
    return push(std::move(n));
  }

 private:
  std::size_t push(LayerNode n) {
    g_.nodes.push_back(std::move(n));
    return g_.nodes.size() - 1;
  }
  LayerGraph& g_;
};

LayerGraph build_graph(std::size_t n, const std::array<std::size_t, 3>& channels,
                       std::size_t classes, bool residual) {
  if (n < 1) throw ValidationError("network depth parameter n must be >= 1");
  if (classes < 1) throw ValidationError("num_classes must be >= 1");
  for (std::size_t c : channels)
    if (c < 1) throw ValidationError("channel widths must be >= 1");

  LayerGraph g;
  GraphWriter w(g);
  std::size_t k = 1;
  auto idx = [&k] { return std::to_string(k); };

  std::size_t x = w.conv("conv1", kGraphInput, 3, channels[0], 1);
  x = w.bn("bn1", x, channels[0]);
  x = w.simple(NodeKind::Relu, "relu1", {x});
  std::size_t width = channels[0];

  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t out = channels[s];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::size_t block_in = x;
      const std::size_t block_width = width;

      ++k;
      std::size_t y = w.conv("conv" + idx(), x, width, out, stride);
      y = w.bn("bn" + idx(), y, out);
      y = w.simple(NodeKind::Relu, "relu" + idx(), {y});

      ++k;
      y = w.conv("conv" + idx(), y, out, out, 1);
      y = w.bn("bn" + idx(), y, out);
      if (residual) {
        std::size_t shortcut = block_in;
        if (stride != 1 || block_width != out) {
          const std::string pname = "proj" + std::to_string(s + 1);
          shortcut = w.conv(pname, block_in, block_width, out, stride, true);
          shortcut = w.bn(pname + ".bn", shortcut, out, true);
        }
        y = w.simple(NodeKind::Add, "add" + idx(), {y, shortcut});
      }
      x = w.simple(NodeKind::Relu, "relu" + idx(), {y});
      width = out;
    }
  }
  x = w.simple(NodeKind::GlobalAvgPool, "pool", {x});
  w.fc("fc", x, width, classes);
  return g;
}

}  // namespace

LayerGraph build_plain(std::size_t n, const std::array<std::size_t, 3>& channels,
                       std::size_t classes) {
  return build_graph(n, channels, classes, false);
}

LayerGraph build_residual(std::size_t n, const std::array<std::size_t, 3>& channels,
                          std::size_t classes) {
  return build_graph(n, channels, classes, true);
}

LayerGraph build(const NetworkSpec& spec) {
  LayerGraph g = build_graph(spec.n, spec.channels, spec.num_classes, spec.residual);
  g.input = {spec.input[0], spec.input[1], spec.input[2]};
  if (!g.nodes.empty()) g.nodes.front().in_channels = spec.input[0];
  return g;
}

std::size_t ValidationReport::groupwise_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [](const FanReport& r) { return r.groupwise; }));
}

ValidationReport validate(const LayerGraph& graph) {
  ValidationReport report;
  if (graph.nodes.empty()) throw ValidationError("empty layer graph");
  std::vector<Shape> shapes(graph.nodes.size());

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const LayerNode& n = graph.nodes[i];
    auto fail = [&](const std::string& why) -> void {
      throw ValidationError("layer " + std::to_string(i) + " '" + n.name + "' (" +
                            to_string(n.kind) + "): " + why);
    };
    std::vector<Shape> in;
    for (std::size_t src : n.inputs) {
      if (src == kGraphInput) {
        in.push_back(graph.input);
      } else if (src >= i) {
        fail("input " + std::to_string(src) + " is not an earlier layer");
      } else {
        in.push_back(shapes[src]);
      }
    }
    const std::size_t expected_inputs = n.kind == NodeKind::Add ? 2 : 1;
    if (in.size() != expected_inputs) fail("expected " + std::to_string(expected_inputs) + " inputs");
    const Shape& s = in[0];

    switch (n.kind) {
      case NodeKind::Conv: {
        if (s.size() != 3) fail("expects a C x H x W input, got " + shape_str(s));
        if (s[0] != n.in_channels)
          fail("expects " + std::to_string(n.in_channels) + " channels, input " + shape_str(s));
        if (n.stride == 0 || n.kw == 0 || n.kh == 0 || n.out_channels == 0) fail("degenerate conv");
        if (s[1] + 2 * n.pad < n.kh || s[2] + 2 * n.pad < n.kw) fail("kernel larger than padded input");
        shapes[i] = {n.out_channels, (s[1] + 2 * n.pad - n.kh) / n.stride + 1,
                     (s[2] + 2 * n.pad - n.kw) / n.stride + 1};
        break;
      }
      case NodeKind::BatchNorm:
        if (s.empty() || s[0] != n.in_channels)
          fail("expects " + std::to_string(n.in_channels) + " channels, input " + shape_str(s));
        shapes[i] = s;
        break;
      case NodeKind::Relu:
        shapes[i] = s;
        break;
      case NodeKind::GlobalAvgPool:
        if (s.size() != 3) fail("expects a C x H x W input, got " + shape_str(s));
        shapes[i] = {s[0]};
        break;
      case NodeKind::Fc:
        if (shape_count(s) != n.in_channels)
          fail("expects " + std::to_string(n.in_channels) + " features, input " + shape_str(s));
        shapes[i] = {n.out_channels};
        break;
      case NodeKind::Add:
        if (in[0] != in[1]) fail("operand shapes differ: " + shape_str(in[0]) + " vs " + shape_str(in[1]));
        shapes[i] = s;
        break;
    }

    if (n.parametric()) {
      FanReport f;
      f.name = n.name;
      f.kind = n.kind;
      f.f_in = n.kind == NodeKind::Conv ? n.kw * n.kh * n.in_channels : n.in_channels;
      f.f_out = n.out_channels;
      f.groupwise = f.f_in < f.f_out;
      f.groups = partition_groups(f.f_in, f.f_out).count();
      report.layers.push_back(f);
    }
  }
  report.output = shapes.back();
  report.parametric_layers = report.layers.size();
  return report;
}

ValidationReport validate(const NetworkSpec& spec) {
  ValidationReport report = validate(build(spec));
  for (std::size_t s = 1; s < 3; ++s) {
    if (spec.channels[s] != 2 * spec.channels[s - 1]) {
      report.warnings.push_back("stage " + std::to_string(s + 1) + " width " +
                                std::to_string(spec.channels[s]) + " is not double the previous " +
                                std::to_string(spec.channels[s - 1]));
    }
  }
  return report;
}

}  // namespace orthonet
