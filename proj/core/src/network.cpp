#include "orthonet/network.hpp"

#include <cmath>
#include <map>

#include "orthonet/errors.hpp"

namespace orthonet {

std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::Ortho: return "ortho";
    case InitKind::Msra: return "msra";
    case InitKind::Gaussian: return "gaussian";
  }
  return "?";
}

InitKind parse_init_kind(const std::string& name) {
  if (name == "ortho" || name == "orthonormal") return InitKind::Ortho;
  if (name == "msra") return InitKind::Msra;
  if (name == "gaussian") return InitKind::Gaussian;
  throw ConfigError("unknown init kind '" + name + "' (expected ortho|msra|gaussian)");
}

namespace {

Tensor init_matrix(const InitConfig& init, std::size_t f_in, std::size_t f_out, Rng& rng) {
  switch (init.kind) {
    case InitKind::Ortho: return ortho_matrix(f_in, f_out, rng);
    case InitKind::Msra:
      return gaussian(rng, {f_in, f_out}, 0.0, std::sqrt(2.0 / static_cast<double>(f_in)));
    case InitKind::Gaussian: return gaussian(rng, {f_in, f_out}, 0.0, init.gaussian_std);
  }
  throw ConfigError("bad init kind");
}

}  // namespace

Network::Network(LayerGraph graph, const InitConfig& init, Rng& rng, double bn_eps,
                 double bn_momentum)
    : graph_(std::move(graph)) {
  validate(graph_);
  if (init.kind == InitKind::Gaussian && !(init.gaussian_std >= 0.0))
    throw ConfigError("gaussian init std must be >= 0");
  units_.reserve(graph_.nodes.size());
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const LayerNode& n = graph_.nodes[i];
    switch (n.kind) {
      case NodeKind::Conv: {
        ConvUnit u;
        const std::size_t f_in = n.kw * n.kh * n.in_channels;
        u.layer.kernel = KernelMatrix(n.kw, n.kh, n.in_channels, n.out_channels,
                                      init_matrix(init, f_in, n.out_channels, rng));
        u.layer.stride = n.stride;
        u.layer.pad = n.pad;
        u.dw = Tensor({f_in, n.out_channels});
        units_.emplace_back(std::move(u));
        parametric_.push_back(i);
        break;
      }
      case NodeKind::BatchNorm: {
        BnUnit u;
        u.state = make_batch_norm(n.in_channels, bn_eps, bn_momentum);
        u.dgamma = Tensor({n.in_channels});
        u.dbeta = Tensor({n.in_channels});
        units_.emplace_back(std::move(u));
        break;
      }
      case NodeKind::Fc: {
        FcUnit u;
        u.layer = make_fc(n.in_channels, n.out_channels);
        u.layer.weight = init_matrix(init, n.in_channels, n.out_channels, rng);
        u.dw = Tensor({n.in_channels, n.out_channels});
        u.db = Tensor({n.out_channels});
        units_.emplace_back(std::move(u));
        parametric_.push_back(i);
        break;
      }
      default:
        units_.emplace_back(Stateless{});
    }
  }
  outputs_.resize(graph_.nodes.size());
}

const Tensor& Network::input_of(std::size_t node, std::size_t k) const {
  const std::size_t src = graph_.nodes[node].inputs[k];
  return src == kGraphInput ? input_ : outputs_[src];
}

Tensor Network::forward(const Tensor& x, bool training) {
  if (x.rank() != 4 || x.dim(1) != graph_.input[0] || x.dim(2) != graph_.input[1] ||
      x.dim(3) != graph_.input[2]) {
    throw DimensionError("network expects [N, " + std::to_string(graph_.input[0]) + ", " +
                         std::to_string(graph_.input[1]) + ", " + std::to_string(graph_.input[2]) +
                         "] input, got " + shape_str(x.shape()));
  }
  input_ = x;
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const LayerNode& n = graph_.nodes[i];
    const Tensor& in = input_of(i, 0);
    switch (n.kind) {
      case NodeKind::Conv:
        outputs_[i] = conv_forward(std::get<ConvUnit>(units_[i]).layer, in);
        break;
      case NodeKind::BatchNorm:
        outputs_[i] = bn_forward(std::get<BnUnit>(units_[i]).state, in, training);
        break;
      case NodeKind::Relu:
        outputs_[i] = relu_forward(in);
        break;
      case NodeKind::GlobalAvgPool:
        outputs_[i] = global_avg_pool_forward(in);
        break;
      case NodeKind::Fc: {
        const Tensor flat = in.rank() == 2 ? in : in.reshaped({in.dim(0), in.size() / in.dim(0)});
        outputs_[i] = fc_forward(std::get<FcUnit>(units_[i]).layer, flat);
        break;
      }
      case NodeKind::Add:
        outputs_[i] = add(in, input_of(i, 1));
        break;
    }
  }
  return outputs_.back();
}

Tensor Network::backward(const Tensor& d_logits, const ErrorHook& hook) {
  if (outputs_.back().empty()) throw StateError("backward called before forward");
  require_same_shape(outputs_.back(), d_logits, "Network::backward");

  std::vector<Tensor> grads(graph_.nodes.size());
  Tensor d_input;
  grads.back() = d_logits;
  std::size_t param_index = parametric_.size();

  auto send = [&](std::size_t node, std::size_t k, Tensor g) {
    const std::size_t src = graph_.nodes[node].inputs[k];
    Tensor& slot = src == kGraphInput ? d_input : grads[src];
    if (slot.empty()) {
      slot = std::move(g);
    } else {
      axpy(1.0, g, slot);
    }
  };

  for (std::size_t i = graph_.nodes.size(); i-- > 0;) {
    const LayerNode& n = graph_.nodes[i];
    Tensor& g = grads[i];
    if (n.parametric()) --param_index;
    if (g.empty()) continue;  // node does not reach the output
    const Tensor& in = input_of(i, 0);
    switch (n.kind) {
      case NodeKind::Conv: {
        if (hook) hook(param_index, g);
        auto& u = std::get<ConvUnit>(units_[i]);
        ConvGrads cg = conv_backward(u.layer, in, g);
        u.dw = std::move(cg.dw);
        send(i, 0, std::move(cg.dx));
        break;
      }
      case NodeKind::BatchNorm: {
        auto& u = std::get<BnUnit>(units_[i]);
        BnGrads bg = bn_backward(u.state, g);
        u.dgamma = std::move(bg.dgamma);
        u.dbeta = std::move(bg.dbeta);
        send(i, 0, std::move(bg.dx));
        break;
      }
      case NodeKind::Relu:
        send(i, 0, relu_backward(in, g));
        break;
      case NodeKind::GlobalAvgPool:
        send(i, 0, global_avg_pool_backward(in.shape(), g));
        break;
      case NodeKind::Fc: {
        if (hook) hook(param_index, g);
        auto& u = std::get<FcUnit>(units_[i]);
        const Tensor flat = in.rank() == 2 ? in : in.reshaped({in.dim(0), in.size() / in.dim(0)});
        FcGrads fg = fc_backward(u.layer, flat, g);
        u.dw = std::move(fg.dw);
        u.db = std::move(fg.db);
        send(i, 0, fg.dx.reshaped(in.shape()));
        break;
      }
      case NodeKind::Add:
        send(i, 0, g);
        send(i, 1, std::move(g));
        break;
    }
    grads[i] = Tensor();  // release as soon as consumed
  }
  return d_input;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const std::string& name = graph_.nodes[i].name;
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) {
      Tensor& w = c->layer.kernel.matrix();
      out.push_back({name + ".weight", &w, &c->dw, true, partition_groups(w.dim(0), w.dim(1))});
    } else if (auto* b = std::get_if<BnUnit>(&units_[i])) {
      out.push_back({name + ".gamma", &b->state.gamma, &b->dgamma, false, {}});
      out.push_back({name + ".beta", &b->state.beta, &b->dbeta, false, {}});
    } else if (auto* f = std::get_if<FcUnit>(&units_[i])) {
      Tensor& w = f->layer.weight;
      out.push_back({name + ".weight", &w, &f->dw, true, partition_groups(w.dim(0), w.dim(1))});
      out.push_back({name + ".bias", &f->layer.bias, &f->db, false, {}});
    }
  }
  return out;
}

std::vector<ParametricKind> Network::parametric_kinds() const {
  std::vector<ParametricKind> kinds;
  for (std::size_t i : parametric_)
    kinds.push_back(graph_.nodes[i].kind == NodeKind::Conv ? ParametricKind::Conv
                                                           : ParametricKind::Fc);
  return kinds;
}

std::vector<const Tensor*> Network::weight_matrices() const {
  std::vector<const Tensor*> out;
  for (std::size_t i : parametric_) {
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) {
      out.push_back(&c->layer.kernel.matrix());
    } else {
      out.push_back(&std::get<FcUnit>(units_[i]).layer.weight);
    }
  }
  return out;
}

std::vector<const Tensor*> Network::conv_matrices() const {
  std::vector<const Tensor*> out;
  for (std::size_t i : parametric_)
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) out.push_back(&c->layer.kernel.matrix());
  return out;
}

const KernelMatrix& Network::first_conv() const {
  for (std::size_t i : parametric_)
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) return c->layer.kernel;
  throw StateError("network has no convolution layer");
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const std::string& name = graph_.nodes[i].name;
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) {
      out.push_back({name + ".weight", c->layer.kernel.to_tensor()});
    } else if (auto* b = std::get_if<BnUnit>(&units_[i])) {
      out.push_back({name + ".gamma", b->state.gamma});
      out.push_back({name + ".beta", b->state.beta});
      out.push_back({name + ".running_mean", b->state.running_mu});
      out.push_back({name + ".running_var", b->state.running_var});
    } else if (auto* f = std::get_if<FcUnit>(&units_[i])) {
      out.push_back({name + ".weight", f->layer.weight});
      out.push_back({name + ".bias", f->layer.bias});
    }
  }
  return out;
}

void Network::load_state(std::span<const NamedTensor> tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing '" + name + "'");
    if (it->second->shape() != dst.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_str(it->second->shape()) + ", expected " + shape_str(dst.shape()));
    }
    dst = *it->second;
  };
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    const std::string& name = graph_.nodes[i].name;
    if (auto* c = std::get_if<ConvUnit>(&units_[i])) {
      Tensor t = c->layer.kernel.to_tensor();
      take(name + ".weight", t);
      c->layer.kernel = KernelMatrix::from_tensor(t);
    } else if (auto* b = std::get_if<BnUnit>(&units_[i])) {
      take(name + ".gamma", b->state.gamma);
      take(name + ".beta", b->state.beta);
      take(name + ".running_mean", b->state.running_mu);
      take(name + ".running_var", b->state.running_var);
    } else if (auto* f = std::get_if<FcUnit>(&units_[i])) {
      take(name + ".weight", f->layer.weight);
      take(name + ".bias", f->layer.bias);
    }
  }
}

double top1_accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw DimensionError("top1_accuracy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0.0;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace orthonet
