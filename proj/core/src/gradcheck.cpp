#include "orthonet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "orthonet/errors.hpp"
#include "orthonet/layers.hpp"
#include "orthonet/ortho_init.hpp"
#include "orthonet/regularization.hpp"
#include "orthonet/rng.hpp"

namespace orthonet {

std::string to_string(GradTarget target) {
  switch (target) {
    case GradTarget::Conv: return "conv";
    case GradTarget::Bn: return "bn";
    case GradTarget::Relu: return "relu";
    case GradTarget::Fc: return "fc";
    case GradTarget::Softmax: return "softmax";
    case GradTarget::OrthoReg: return "orthoreg";
    case GradTarget::L2Reg: return "l2reg";
  }
  return "?";
}

GradTarget parse_grad_target(const std::string& name) {
  for (GradTarget t : all_grad_targets())
    if (to_string(t) == name) return t;
  throw ConfigError("unknown gradcheck layer '" + name +
                    "' (expected conv|bn|relu|fc|softmax|orthoreg|l2reg)");
}

const std::vector<GradTarget>& all_grad_targets() {
  static const std::vector<GradTarget> t{GradTarget::Conv,    GradTarget::Bn,       GradTarget::Relu,
                                         GradTarget::Fc,      GradTarget::Softmax,  GradTarget::OrthoReg,
                                         GradTarget::L2Reg};
  return t;
}

Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  require_same_shape(analytic, numeric, "relative_error");
  const double denom = std::max(frobenius_norm(analytic), frobenius_norm(numeric));
  if (denom == 0.0) return 0.0;
  return frobenius_norm(sub(analytic, numeric)) / denom;
}

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// Worst relative error over the (analytic, numeric) pairs of one trial.
using Trial = std::function<double(Rng&)>;

double conv_trial(Rng& rng) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), m = pick(rng, 1, 4);
  const std::size_t k = rng.bernoulli(0.5) ? 3 : 1;
  ConvLayer layer;
  layer.stride = pick(rng, 1, 2);
  layer.pad = k == 3 ? pick(rng, 0, 1) : 0;
  const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
  layer.kernel = KernelMatrix(k, k, c, m, gaussian(rng, {k * k * c, m}, 0.0, 1.0));
  Tensor x = gaussian(rng, {n, c, h, w}, 0.0, 1.0);
  const Tensor r = gaussian(rng, conv_output_shape(layer, x.shape()), 0.0, 1.0);

  auto loss = [&] { return dot(conv_forward(layer, x), r); };
  const ConvGrads g = conv_backward(layer, x, r);
  const Tensor nx = numeric_gradient(loss, x);
  const Tensor nw = numeric_gradient(loss, layer.kernel.matrix());
  return std::max(relative_error(g.dx, nx), relative_error(g.dw, nw));
}

double bn_trial(Rng& rng) {
  // m >= 3: with two samples the normalized output is +-gamma and dx vanishes.
  const std::size_t n = pick(rng, 3, 5), c = pick(rng, 1, 3);
  const bool spatial = rng.bernoulli(0.5);
  Shape shape = spatial ? Shape{n, c, pick(rng, 1, 3), pick(rng, 1, 3)} : Shape{n, c};
  BatchNormState bn = make_batch_norm(c, 1e-5);
  bn.gamma = gaussian(rng, {c}, 1.0, 0.5);
  bn.beta = gaussian(rng, {c}, 0.0, 0.5);
  Tensor x = gaussian(rng, shape, 0.5, 2.0);
  const Tensor r = gaussian(rng, shape, 0.0, 1.0);

  auto loss = [&] {
    BatchNormState scratch = bn;
    return dot(bn_forward(scratch, x, true), r);
  };
  BatchNormState live = bn;
  bn_forward(live, x, true);
  const BnGrads g = bn_backward(live, r);
  const Tensor nx = numeric_gradient(loss, x);
  const Tensor ng = numeric_gradient(loss, bn.gamma);
  const Tensor nb = numeric_gradient(loss, bn.beta);
  return std::max({relative_error(g.dx, nx), relative_error(g.dgamma, ng), relative_error(g.dbeta, nb)});
}

double relu_trial(Rng& rng) {
  Tensor x = gaussian(rng, {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, 0.0, 1.0);
  // Keep every entry away from the kink so the difference quotient is exact.
  for (double& v : x.data())
    if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
  const Tensor r = gaussian(rng, x.shape(), 0.0, 1.0);
  auto loss = [&] { return dot(relu_forward(x), r); };
  const Tensor g = relu_backward(x, r);
  return relative_error(g, numeric_gradient(loss, x));
}

double fc_trial(Rng& rng) {
  const std::size_t n = pick(rng, 1, 4), fi = pick(rng, 1, 8), fo = pick(rng, 1, 6);
  FcLayer fc{gaussian(rng, {fi, fo}, 0.0, 1.0), gaussian(rng, {fo}, 0.0, 1.0)};
  Tensor x = gaussian(rng, {n, fi}, 0.0, 1.0);
  const Tensor r = gaussian(rng, {n, fo}, 0.0, 1.0);
  auto loss = [&] { return dot(fc_forward(fc, x), r); };
  const FcGrads g = fc_backward(fc, x, r);
  return std::max({relative_error(g.dx, numeric_gradient(loss, x)),
                   relative_error(g.dw, numeric_gradient(loss, fc.weight)),
                   relative_error(g.db, numeric_gradient(loss, fc.bias))});
}

double softmax_trial(Rng& rng) {
  const std::size_t n = pick(rng, 1, 5), k = pick(rng, 2, 10);
  Tensor logits = gaussian(rng, {n, k}, 0.0, 3.0);
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.index(k));
  auto loss = [&] { return softmax_xent(logits, labels).loss; };
  const SoftmaxXent s = softmax_xent(logits, labels);
  return relative_error(s.d_logits, numeric_gradient(loss, logits));
}

double ortho_trial(Rng& rng) {
  const std::size_t fi = pick(rng, 1, 9), fo = pick(rng, 1, 12);
  const double lambda = 0.01 + rng.uniform();
  Tensor w = gaussian(rng, {fi, fo}, 0.0, 1.0 / std::sqrt(static_cast<double>(fi)));
  const GroupPartition part = partition_groups(fi, fo);
  auto loss = [&] { return ortho_penalty(w, lambda, part); };
  const Tensor g = ortho_grad(w, lambda, part);
  return relative_error(g, numeric_gradient(loss, w));
}

double l2_trial(Rng& rng) {
  const double lambda = 0.01 + rng.uniform();
  Tensor w = gaussian(rng, {pick(rng, 1, 9), pick(rng, 1, 9)}, 0.0, 1.0);
  auto loss = [&] { return l2_penalty(w, lambda); };
  return relative_error(l2_grad(w, lambda), numeric_gradient(loss, w));
}

Trial trial_for(GradTarget t) {
  switch (t) {
    case GradTarget::Conv: return conv_trial;
    case GradTarget::Bn: return bn_trial;
    case GradTarget::Relu: return relu_trial;
    case GradTarget::Fc: return fc_trial;
    case GradTarget::Softmax: return softmax_trial;
    case GradTarget::OrthoReg: return ortho_trial;
    case GradTarget::L2Reg: return l2_trial;
  }
  throw ConfigError("bad gradcheck target");
}

}  // namespace

GradCheckResult gradcheck(GradTarget target, std::size_t trials, std::uint64_t seed, double tolerance) {
  GradCheckResult res;
  res.target = target;
  res.tolerance = tolerance;
  Rng rng = Rng(seed).derive(static_cast<std::uint64_t>(target) + 1);
  const Trial trial = trial_for(target);
  for (std::size_t i = 0; i < trials; ++i) {
    const double e = trial(rng);
    res.max_rel_error = std::max(res.max_rel_error, std::isnan(e) ? INFINITY : e);
    if (!(e < tolerance)) ++res.failures;
    ++res.trials;
  }
  return res;
}

}  // namespace orthonet
