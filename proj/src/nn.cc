#include "vfl/nn.h"

#include <algorithm>
#include <cmath>

#include "vfl/error.h"
#include "vfl/kernels.h"

namespace vfl {

Tensor2 softmax(const Tensor2& logits) {
  Tensor2 p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) s += (out[c] = std::exp(in[c] - mx));
    for (double& v : out) v /= s;
  }
  return p;
}

Tensor2 sigmoid(const Tensor2& logits) {
  Tensor2 out = logits;
  for (double& v : out.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return out;
}

Tensor2 apply_activation(const Tensor2& x, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu: {
      Tensor2 out = x;
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kSoftmax:
      return softmax(x);
  }
  return x;
}

Tensor2 forward_fc(const Tensor2& x, const Tensor2& weights, const Tensor2& bias,
                   Activation activation) {
  require_shape(x.cols() == weights.rows(),
                "forward_fc: input " + x.shape_string() + " vs weights " + weights.shape_string());
  require_shape(bias.rows() == 1 && bias.cols() == weights.cols(),
                "forward_fc: bias " + bias.shape_string() + " vs weights " + weights.shape_string());
  Tensor2 z = kernels::matmul(x, weights);
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += bias(0, c);
  return apply_activation(z, activation);
}

double cross_entropy(const Tensor2& probs, const Tensor2& onehot) {
  require_shape(probs.same_shape(onehot), "cross_entropy: probs " + probs.shape_string() +
                                              " vs labels " + onehot.shape_string());
  if (probs.rows() == 0) return 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    for (std::size_t c = 0; c < probs.cols(); ++c)
      if (onehot(r, c) != 0.0) loss -= onehot(r, c) * std::log(std::max(probs(r, c), Tape::kProbFloor));
  return loss / static_cast<double>(probs.rows());
}

Tensor2 one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor2 out(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require_shape(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < num_classes,
                  "one_hot: label out of range");
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer{Tensor2(in, out), Tensor2(1, out), act, Tensor2()};
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(in, 1)));
  for (double& w : layer.weights.data()) w = rng.uniform(-bound, bound);
  return layer;
}

namespace {

// He-style init with the fan-in counted per output column of the mask.
// Shared entries take the value drawn for their group.
void init_masked(DenseLayer& layer, Rng& rng) {
  const std::size_t in = layer.weights.rows(), out = layer.weights.cols();
  std::vector<std::size_t> fan(out, 0);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) fan[j] += layer.mask(i, j) != 0.0;
  std::vector<double> group_value;
  std::vector<bool> drawn;
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) {
      if (layer.mask(i, j) == 0.0) {
        layer.weights(i, j) = 0.0;
        continue;
      }
      const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan[j], 1)));
      if (layer.weight_group.empty()) {
        layer.weights(i, j) = rng.uniform(-bound, bound);
        continue;
      }
      const auto g = static_cast<std::size_t>(layer.weight_group[i * out + j]);
      if (g >= drawn.size()) {
        drawn.resize(g + 1, false);
        group_value.resize(g + 1, 0.0);
      }
      if (!drawn[g]) {
        group_value[g] = rng.uniform(-bound, bound);
        drawn[g] = true;
      }
      layer.weights(i, j) = group_value[g];
    }
  for (double& b : layer.bias.data()) b = 0.0;
}

// Replaces each entry by the sum over its group.
void tie(std::span<double> g, const std::vector<int>& groups) {
  if (groups.empty()) return;
  std::vector<double> sums;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (groups[k] < 0) continue;
    const auto id = static_cast<std::size_t>(groups[k]);
    if (id >= sums.size()) sums.resize(id + 1, 0.0);
    sums[id] += g[k];
  }
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = groups[k] < 0 ? 0.0 : sums[static_cast<std::size_t>(groups[k])];
}

}  // namespace

Mlp::Mlp(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations,
         Rng& rng) {
  if (widths.size() < 2 || activations.size() + 1 != widths.size())
    throw ConfigError("Mlp: need one activation per layer and at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.push_back(make_dense(widths[i], widths[i + 1], activations[i], rng));
}

Mlp Mlp::local(const LocalGeometry& g, const std::vector<Activation>& activations, Rng& rng) {
  Mlp m;
  m.geometry_ = g;
  if (g.rows == 0 || g.cols == 0 || g.channels.empty() || activations.size() != g.channels.size())
    throw ConfigError("Mlp: local geometry needs a grid and one activation per layer");
  const std::size_t pixels = g.rows * g.cols;
  const auto radius = static_cast<long>(g.patch / 2);
  std::size_t in_ch = 1;
  for (std::size_t l = 0; l < g.channels.size(); ++l) {
    const std::size_t out_ch = g.channels[l];
    if (out_ch == 0) throw ConfigError("Mlp: local layer needs at least one channel");
    DenseLayer layer{Tensor2(pixels * in_ch, pixels * out_ch), Tensor2(1, pixels * out_ch), activations[l],
                     Tensor2(pixels * in_ch, pixels * out_ch)};
    const std::size_t cols = pixels * out_ch;
    if (g.shared) {
      layer.weight_group.assign(pixels * in_ch * cols, -1);
      layer.bias_group.resize(cols);
      for (std::size_t j = 0; j < cols; ++j) layer.bias_group[j] = static_cast<int>(j % out_ch);
    }
    // Unit index is position * channels + channel.
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t q = 0; q < pixels; ++q) {
        const long dr = static_cast<long>(q / g.cols) - static_cast<long>(p / g.cols);
        const long dc = static_cast<long>(q % g.cols) - static_cast<long>(p % g.cols);
        if (std::abs(dr) > radius || std::abs(dc) > radius) continue;
        const auto offset = static_cast<std::size_t>((dr + radius) * (2 * radius + 1) + (dc + radius));
        for (std::size_t ci = 0; ci < in_ch; ++ci)
          for (std::size_t co = 0; co < out_ch; ++co) {
            const std::size_t i = q * in_ch + ci, j = p * out_ch + co;
            layer.mask(i, j) = 1.0;
            if (g.shared) layer.weight_group[i * cols + j] = static_cast<int>((offset * in_ch + ci) * out_ch + co);
          }
      }
    init_masked(layer, rng);
    m.layers_.push_back(std::move(layer));
    in_ch = out_ch;
  }
  return m;
}

Mlp Mlp::reinitialized(Rng& rng) const {
  Mlp out = *this;
  for (auto& l : out.layers_) {
    if (l.mask.size() == 0) {
      l = make_dense(l.weights.rows(), l.weights.cols(), l.activation, rng);
    } else {
      init_masked(l, rng);
    }
  }
  return out;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().weights.rows(); }

std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().weights.cols(); }

Tensor2 Mlp::forward(const Tensor2& x) const {
  Tensor2 h = x;
  for (const auto& l : layers_) h = forward_fc(h, l.weights, l.bias, l.activation);
  return h;
}

Var Mlp::forward(Tape& tape, Var x, Bound* bound) const {
  Var h = x;
  for (const auto& l : layers_) {
    Var w = tape.leaf(l.weights);
    Var b = tape.leaf(l.bias);
    if (bound) {
      bound->weights.push_back(w);
      bound->biases.push_back(b);
    }
    h = tape.add_row(tape.matmul(h, w), b);
    switch (l.activation) {
      case Activation::kRelu:
        h = tape.relu(h);
        break;
      case Activation::kSigmoid:
        h = tape.sigmoid(h);
        break;
      case Activation::kIdentity:
      case Activation::kSoftmax:
        break;
    }
  }
  return h;
}

std::vector<Tensor2*> Mlp::parameters() {
  std::vector<Tensor2*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weights);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Tensor2> Mlp::gradients(const Tape& tape, const Bound& bound) const {
  std::vector<Tensor2> out;
  for (std::size_t i = 0; i < bound.weights.size(); ++i) {
    const DenseLayer& l = layers_[i];
    Tensor2 g = tape.grad(bound.weights[i]);
    if (l.mask.size() != 0)
      for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] *= l.mask.data()[k];
    tie(g.data(), l.weight_group);
    Tensor2 gb = tape.grad(bound.biases[i]);
    tie(gb.data(), l.bias_group);
    out.push_back(std::move(g));
    out.push_back(std::move(gb));
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

void Sgd::step(const std::vector<Tensor2*>& params, const std::vector<Tensor2>& grads) {
  require_shape(params.size() == grads.size(), "Sgd::step: parameter/gradient count mismatch");
  if (momentum_ > 0.0 && velocity_.size() != params.size()) {
    velocity_.clear();
    for (auto* p : params) velocity_.emplace_back(p->rows(), p->cols());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    require_shape(p.size() == g.size(), "Sgd::step: gradient shape mismatch");
    if (momentum_ > 0.0) {
      auto v = velocity_[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j] + g[j];
        p[j] -= lr_ * v[j];
      }
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr_ * g[j];
    }
  }
}

}  // namespace vfl
