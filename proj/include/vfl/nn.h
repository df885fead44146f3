#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "vfl/autodiff.h"
#include "vfl/rng.h"
#include "vfl/tensor.h"

namespace vfl {

enum class Activation { kIdentity, kRelu, kSigmoid, kSoftmax };

Tensor2 softmax(const Tensor2& logits);
Tensor2 sigmoid(const Tensor2& logits);
Tensor2 apply_activation(const Tensor2& x, Activation act);

// x * weights + bias, followed by the activation (softmax row-wise).
Tensor2 forward_fc(const Tensor2& x, const Tensor2& weights, const Tensor2& bias,
                   Activation activation);

// Mean over rows of -log p[true class], with p floored at Tape::kProbFloor.
double cross_entropy(const Tensor2& probs, const Tensor2& onehot);

Tensor2 one_hot(std::span<const int> labels, std::size_t num_classes);

struct DenseLayer {
  Tensor2 weights;  // in x out
  Tensor2 bias;     // 1 x out
  Activation activation = Activation::kIdentity;
  Tensor2 mask;  // empty: dense; else 1 where a connection exists
  // Weight sharing: entries with the same group id are one parameter.
  // Empty when untied; -1 marks masked-out entries.
  std::vector<int> weight_group;
  std::vector<int> bias_group;
};

// He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

// Locally connected stack over a rows x cols pixel grid. Unit (p, c) of a
// layer sees every channel of the previous layer at positions within
// patch / 2 rows and columns of p. The input has one channel. With `shared`
// the weights depend only on the offset and channels (a zero-padded
// convolution).
struct LocalGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch = 3;
  std::vector<std::size_t> channels;  // output channels per layer
  bool shared = true;
};

// Stack of fully-connected layers, optionally masked.
class Mlp {
 public:
  // Parameter handles bound on a tape by forward().
  struct Bound {
    std::vector<Var> weights;
    std::vector<Var> biases;
  };

  Mlp() = default;
  // widths = {in, hidden..., out}; one activation per layer.
  Mlp(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations, Rng& rng);
  static Mlp local(const LocalGeometry& geometry, const std::vector<Activation>& activations, Rng& rng);

  // Same shapes, masks and activations with freshly drawn weights.
  Mlp reinitialized(Rng& rng) const;

  bool empty() const { return layers_.empty(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Tensor2 forward(const Tensor2& x) const;
  // Softmax output layers are left as logits on the tape; losses apply them.
  Var forward(Tape& tape, Var x, Bound* bound) const;

  std::vector<Tensor2*> parameters();
  // Weight gradients are zero outside each layer's mask and summed over
  // shared entries.
  std::vector<Tensor2> gradients(const Tape& tape, const Bound& bound) const;
  std::size_t parameter_count() const;
  const std::optional<LocalGeometry>& geometry() const { return geometry_; }

 private:
  std::vector<DenseLayer> layers_;
  std::optional<LocalGeometry> geometry_;
};

// Plain SGD with optional heavy-ball momentum.
class Sgd {
 public:
  Sgd(double learning_rate = 0.1, double momentum = 0.0)
      : lr_(learning_rate), momentum_(momentum) {}

  void step(const std::vector<Tensor2*>& params, const std::vector<Tensor2>& grads);
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor2> velocity_;
};

}  // namespace vfl
