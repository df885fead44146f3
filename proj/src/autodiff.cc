#include "vfl/autodiff.h"

#include <algorithm>
#include <cmath>

#include "vfl/error.h"
#include "vfl/kernels.h"

namespace vfl {
namespace {

Tensor2 softmax_rows(const Tensor2& z) {
  Tensor2 p(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) s += (out[c] = std::exp(in[c] - mx));
    for (double& v : out) v /= s;
  }
  return p;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 scalar_tensor(double v) { return Tensor2(1, 1, v); }

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor2 value) {
  Node n{Op::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor2 value) {
  Node n{Op::kLeaf};
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Tensor2 Tape::grad(Var v) const {
  if (v.id < grads_.size() && !grads_[v.id].empty()) return grads_[v.id];
  const auto& val = nodes_[v.id].value;
  return Tensor2(val.rows(), val.cols());
}

Var Tape::matmul(Var a, Var b) {
  Node n{Op::kMatmul, a.id, b.id};
  n.value = kernels::matmul(value(a), value(b));
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  Node n{Op::kAdd, a.id, b.id};
  n.value = value(a) + value(b);
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  Node n{Op::kSub, a.id, b.id};
  n.value = value(a) - value(b);
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  Node n{Op::kMul, a.id, b.id};
  n.value = hadamard(value(a), value(b));
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n{Op::kScale, a.id};
  n.value = value(a) * s;
  n.scalar = s;
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add_row(Var x, Var bias) {
  const Tensor2& xv = value(x);
  const Tensor2& bv = value(bias);
  require_shape(bv.rows() == 1 && bv.cols() == xv.cols(),
                "add_row: bias " + bv.shape_string() + " does not match " + xv.shape_string());
  Node n{Op::kAddRow, x.id, bias.id};
  n.value = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) n.value(r, c) += bv(0, c);
  n.needs_grad = nodes_[x.id].needs_grad || nodes_[bias.id].needs_grad;
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  Node n{Op::kConcat, a.id, b.id};
  n.value = vfl::concat_cols(value(a), value(b));
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n{Op::kRelu, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n{Op::kSigmoid, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) v = sigmoid_scalar(v);
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n{Op::kExp, a.id};
  n.value = value(a);
  for (double& v : n.value.data()) v = std::exp(v);
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  Node n{Op::kSoftmax, a.id};
  n.value = softmax_rows(value(a));
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n{Op::kSum, a.id};
  n.value = scalar_tensor(value(a).sum());
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::squared_norm(Var a) {
  Node n{Op::kSquaredNorm, a.id};
  double s = 0.0;
  for (double v : value(a).data()) s += v * v;
  n.value = scalar_tensor(s);
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, const Tensor2& targets) {
  const Tensor2& z = value(logits);
  require_shape(z.same_shape(targets), "softmax_cross_entropy: logits " + z.shape_string() +
                                           " vs targets " + targets.shape_string());
  Node n{Op::kSoftmaxCe, logits.id};
  n.aux = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c)
      if (targets(r, c) != 0.0) loss -= targets(r, c) * std::log(std::max(n.aux(r, c), kProbFloor));
  n.value = scalar_tensor(z.rows() == 0 ? 0.0 : loss / static_cast<double>(z.rows()));
  // Gradient (p - t) / rows, cached so backward is a scale.
  n.aux = n.aux - targets;
  n.needs_grad = nodes_[logits.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sigmoid_cross_entropy(Var logits, const Tensor2& targets) {
  const Tensor2& z = value(logits);
  require_shape(z.same_shape(targets) && z.cols() == 1,
                "sigmoid_cross_entropy: expects matching single-column tensors");
  Node n{Op::kSigmoidCe, logits.id};
  n.aux = Tensor2(z.rows(), 1);
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double p = sigmoid_scalar(z(r, 0));
    const double t = targets(r, 0);
    loss -= t * std::log(std::max(p, kProbFloor)) + (1 - t) * std::log(std::max(1 - p, kProbFloor));
    n.aux(r, 0) = p - t;
  }
  n.value = scalar_tensor(z.rows() == 0 ? 0.0 : loss / static_cast<double>(z.rows()));
  n.needs_grad = nodes_[logits.id].needs_grad;
  return push(std::move(n));
}

Var Tape::gaussian_kl(Var mu, Var logvar) {
  const Tensor2& m = value(mu);
  const Tensor2& lv = value(logvar);
  require_shape(m.same_shape(lv), "gaussian_kl: mu/logvar shape mismatch");
  Node n{Op::kGaussianKl, mu.id, logvar.id};
  double kl = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double a = m.data()[i], l = lv.data()[i];
    kl += 0.5 * (a * a + std::exp(l) - 1.0 - l);
  }
  n.value = scalar_tensor(m.rows() == 0 ? 0.0 : kl / static_cast<double>(m.rows()));
  n.needs_grad = nodes_[mu.id].needs_grad || nodes_[logvar.id].needs_grad;
  return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Tensor2& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor2& dst = grads_[id];
  if (dst.empty()) {
    dst = g;
  } else {
    auto d = dst.data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

void Tape::backward(Var loss) {
  const Tensor2& v = value(loss);
  if (v.rows() != 1 || v.cols() != 1)
    throw ContractError("backward: loss node is " + v.shape_string() + ", expected 1x1");
  Seed seed{loss, scalar_tensor(1.0)};
  backward(std::span<const Seed>(&seed, 1));
}

void Tape::backward(std::span<const Seed> seeds) {
  grads_.assign(nodes_.size(), Tensor2());
  for (const auto& s : seeds) {
    require_shape(s.grad.same_shape(value(s.node)), "backward: seed gradient shape mismatch");
    accumulate(s.node.id, s.grad);
  }
  run_backward();
}

void Tape::run_backward() {
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || grads_[id].empty()) continue;
    const Tensor2 g = grads_[id];
    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
        break;
      case Op::kMatmul:
        if (nodes_[n.a].needs_grad) accumulate(n.a, kernels::matmul_nt(g, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, kernels::matmul_tn(nodes_[n.a].value, g));
        break;
      case Op::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::kSub:
        accumulate(n.a, g);
        if (nodes_[n.b].needs_grad) accumulate(n.b, g * -1.0);
        break;
      case Op::kMul:
        if (nodes_[n.a].needs_grad) accumulate(n.a, hadamard(g, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, hadamard(g, nodes_[n.a].value));
        break;
      case Op::kScale:
        accumulate(n.a, g * n.scalar);
        break;
      case Op::kAddRow: {
        accumulate(n.a, g);
        if (nodes_[n.b].needs_grad) {
          Tensor2 gb(1, g.cols());
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::kConcat: {
        const std::size_t ca = nodes_[n.a].value.cols();
        if (nodes_[n.a].needs_grad) accumulate(n.a, g.slice_cols(0, ca));
        if (nodes_[n.b].needs_grad) accumulate(n.b, g.slice_cols(ca, g.cols()));
        break;
      }
      case Op::kRelu: {
        Tensor2 d = g;
        const auto& in = nodes_[n.a].value;
        for (std::size_t i = 0; i < d.size(); ++i)
          if (in.data()[i] <= 0.0) d.data()[i] = 0.0;
        accumulate(n.a, d);
        break;
      }
      case Op::kSigmoid: {
        Tensor2 d = g;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double s = n.value.data()[i];
          d.data()[i] *= s * (1.0 - s);
        }
        accumulate(n.a, d);
        break;
      }
      case Op::kExp:
        accumulate(n.a, hadamard(g, n.value));
        break;
      case Op::kSoftmax: {
        Tensor2 d(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * n.value(r, c);
          for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) = n.value(r, c) * (g(r, c) - dot);
        }
        accumulate(n.a, d);
        break;
      }
      case Op::kSum: {
        const auto& in = nodes_[n.a].value;
        accumulate(n.a, Tensor2(in.rows(), in.cols(), g(0, 0)));
        break;
      }
      case Op::kSquaredNorm:
        accumulate(n.a, nodes_[n.a].value * (2.0 * g(0, 0)));
        break;
      case Op::kSoftmaxCe:
      case Op::kSigmoidCe: {
        const double rows = static_cast<double>(std::max<std::size_t>(n.aux.rows(), 1));
        accumulate(n.a, n.aux * (g(0, 0) / rows));
        break;
      }
      case Op::kGaussianKl: {
        const auto& m = nodes_[n.a].value;
        const auto& lv = nodes_[n.b].value;
        const double k = g(0, 0) / static_cast<double>(std::max<std::size_t>(m.rows(), 1));
        if (nodes_[n.a].needs_grad) accumulate(n.a, m * k);
        if (nodes_[n.b].needs_grad) {
          Tensor2 d(lv.rows(), lv.cols());
          for (std::size_t i = 0; i < d.size(); ++i)
            d.data()[i] = 0.5 * k * (std::exp(lv.data()[i]) - 1.0);
          accumulate(n.b, d);
        }
        break;
      }
    }
  }
}

}  // namespace vfl
