#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vfl/tensor.h"

namespace vfl {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
// so the node vector is already a topological order; backward walks it once
// in reverse. A tape is built per batch and discarded.
class Tape {
 public:
  struct Seed {
    Var node;
    Tensor2 grad;
  };

  Var constant(Tensor2 value);
  Var leaf(Tensor2 value);

  const Tensor2& value(Var v) const { return nodes_[v.id].value; }
  // Gradient accumulated by the last backward call; zeros if the node was
  // not reached.
  Tensor2 grad(Var v) const;

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_row(Var x, Var bias);
  Var concat_cols(Var a, Var b);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var softmax(Var a);
  Var sum(Var a);
  Var squared_norm(Var a);

  // Mean over rows of -sum_j t_j log softmax(z)_j, with the probability
  // floored at kProbFloor. Targets may be soft (rows summing to one).
  Var softmax_cross_entropy(Var logits, const Tensor2& targets);
  // Mean over rows of binary cross entropy on sigmoid(z), single column.
  Var sigmoid_cross_entropy(Var logits, const Tensor2& targets);
  // Mean over rows of KL(N(mu, exp(logvar)) || N(0, 1)) summed over columns.
  Var gaussian_kl(Var mu, Var logvar);

  // Backpropagates d(loss)/d(node) from a 1x1 loss node.
  void backward(Var loss);
  // Backpropagates from arbitrary seeds (e.g. a received cut-layer gradient).
  void backward(std::span<const Seed> seeds);

  std::size_t size() const { return nodes_.size(); }

  static constexpr double kProbFloor = 1e-12;

 private:
  enum class Op {
    kConstant,
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRow,
    kConcat,
    kRelu,
    kSigmoid,
    kExp,
    kSoftmax,
    kSum,
    kSquaredNorm,
    kSoftmaxCe,
    kSigmoidCe,
    kGaussianKl,
  };

  struct Node {
    Op op;
    std::size_t a = 0;
    std::size_t b = 0;
    Tensor2 value;
    Tensor2 aux;  // op-specific cache (targets, probabilities)
    double scalar = 0.0;
    bool needs_grad = false;
  };

  Var push(Node node);
  void accumulate(std::size_t id, const Tensor2& g);
  void run_backward();

  std::vector<Node> nodes_;
  std::vector<Tensor2> grads_;
};

}  // namespace vfl
