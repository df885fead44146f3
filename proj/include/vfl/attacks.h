#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vfl/engine.h"
#include "vfl/nn.h"
#include "vfl/rng.h"
#include "vfl/tensor.h"

namespace vfl {

enum class AttackKind { kNs, kDs, kDl, kRr, kGi, kMc, kMi };

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);
std::vector<AttackKind> all_attacks();
// Label attacks target y^A; only MI targets x^B.
bool is_label_attack(AttackKind kind);

// Per-sample attack output. Scores are higher-means-positive; predictions
// are hard classes (DL, multiclass RR/GI).
struct LabelScoreSet {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  std::vector<int> predictions;
  std::size_t undecided = 0;
  std::size_t skipped_batches = 0;
};

// Predicted class = column of the most negative entry. A single-column
// gradient (sigmoid head) predicts 1 when negative. Rows without a negative
// entry are undecided: score 0.5 and a random class.
LabelScoreSet direct_label_inference(std::span<const CutLayerBatch> batches, std::size_t num_classes,
                                     Rng& rng);

LabelScoreSet norm_scoring(std::span<const CutLayerBatch> batches);

// `known_positive[i]` is the row within batch i of a sample the attacker
// knows to be positive; batches without one are skipped. Predictions use
// the sign rule (cos > 0 means positive).
LabelScoreSet direction_scoring(std::span<const CutLayerBatch> batches,
                                std::span<const std::optional<std::size_t>> known_positive);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct ResidueResult {
  Tensor2 d_tilde;
  bool rank_deficient = false;
};

// Least-norm solution of x_b^T d = grad_w_b.
ResidueResult residue_reconstruct(const Tensor2& x_b, const Tensor2& grad_w_b);
// Binary: score = -d~ in the positive-class column (last column).
LabelScoreSet residue_scores(const ResidueResult& r, std::span<const std::size_t> indices);

// RR over one epoch: uses B's own features and its logged weight gradient.
LabelScoreSet residue_attack(std::span<const CutLayerBatch> batches, const Tensor2& features_b);

struct GiOptions {
  std::size_t steps = 300;
  double learning_rate = 0.5;
  double tolerance = 1e-6;  // relative objective that counts as converged
};

struct GiResult {
  Tensor2 label_probabilities;
  Tensor2 u_a;
  std::vector<double> trace;
  bool converged = false;
};

// Recovers labels from one batch's VLR weight (and optional bias) gradient.
// The gradient is modelled as x^T (h(u_b + u_a) - h(l)) / b, with head h
// sigmoid for one column and softmax otherwise; the objective is the
// squared error relative to ||grad||^2.
GiResult gradient_inversion(const Tensor2& x_b, const Tensor2& u_b, const Tensor2& grad_w_b,
                            const Tensor2* grad_bias_b, const GiOptions& options);
// Uses B's own logged u^B and features for each batch.
LabelScoreSet gradient_inversion_attack(std::span<const CutLayerBatch> batches,
                                        const Tensor2& features_b, const GiOptions& options);

// Full-batch SGD on softmax cross-entropy; the last layer must be softmax.
void fit_classifier(Mlp& model, const Tensor2& x, std::span<const int> labels, std::size_t epochs,
                    double learning_rate);

struct McOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  std::size_t head_hidden = 16;
  std::uint64_t seed = 0;
};

struct McResult {
  Tensor2 probabilities_mc;
  Tensor2 probabilities_loc;
  double omega_mc = 0.0;
  double omega_loc = 0.0;
};

// Completes B's bottom model with an inference head. `vlr` applies the head
// directly (sigmoid for one output, softmax otherwise) without training.
McResult model_completion(const Mlp& bottom_b, bool vlr, std::size_t num_classes,
                          const Tensor2& aux_x, std::span<const int> aux_y,
                          const Tensor2& eval_x, std::span<const int> eval_y,
                          const McOptions& options);

// Shadow of f^B for MI. kSame copies the layer shapes and connectivity;
// kDifferentWidths widens the hidden layer (and the receptive field of a
// locally connected bottom); kFc uses dense layers of the same widths;
// kLinear is a single dense layer.
enum class ShadowKind { kExact, kSame, kDifferentWidths, kFc, kLinear };
const char* to_string(ShadowKind kind);
ShadowKind shadow_kind_from_string(const std::string& name);

struct MiOptions {
  ShadowKind shadow = ShadowKind::kSame;
  std::size_t shadow_epochs = 300;
  double shadow_learning_rate = 0.1;
  std::size_t steps = 500;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

struct Reconstruction {
  Tensor2 x;
  std::vector<double> trace;  // inversion objective per step
};

struct MiResult {
  Reconstruction reconstruction;
  Tensor2 random_baseline;  // the uniform initial guess
  Mlp shadow;
};

// Party A's attack: fit a shadow of f^B on aux rows with A's models frozen,
// then invert the observed inference outputs u_b by projected gradient
// descent over [0,1] inputs.
MiResult model_inversion(const JointModel& model, const Tensor2& aux_xa, const Tensor2& aux_xb,
                         std::span<const int> aux_y, const Tensor2& u_b, const MiOptions& options);

// Gradient descent on ||u - f(x)||^2 / rows with box projection.
Reconstruction invert_bottom(const Mlp& bottom, const Tensor2& u_target, Tensor2 x0, std::size_t steps,
                             double learning_rate);

}  // namespace vfl
