#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vfl/datasets.h"
#include "vfl/nn.h"
#include "vfl/protections.h"
#include "vfl/tensor.h"

namespace vfl {

enum class AlgorithmKind { kVlr, kVhnn, kVsnn };

const char* to_string(AlgorithmKind kind);
AlgorithmKind algorithm_kind_from_string(const std::string& name);

enum class OptimizerKind { kSgd, kSgdMomentum };

enum class PartyRole { kActive, kPassive };

struct PartyState {
  PartyRole role = PartyRole::kPassive;
  Mlp bottom;  // empty for the active party under VSNN
  Mlp top;     // active party only; empty for VLR (aggregation feeds the head)
  // PRECODE bottleneck on the passive party's output.
  std::optional<VariationalBottleneck> bottleneck;
  Sgd optimizer;

  std::vector<Tensor2*> parameters();
};

enum class HeadKind { kSigmoid, kSoftmax };

struct JointModel {
  AlgorithmKind algorithm = AlgorithmKind::kVlr;
  HeadKind head = HeadKind::kSoftmax;
  std::size_t num_classes = 2;
  PartyState active;
  PartyState passive;
  std::uint64_t seed = 0;  // drives PRECODE sampling at inference
};

struct RecordSwitches {
  bool cut_gradients = true;     // d^B as received by B
  bool param_gradients = false;  // batch gradient of theta^B
  bool predictions = false;      // p~ per batch
  bool active_outputs = false;   // u^A, d^A
  // Keep a theta^B checkpoint every k epochs (0: final epoch only).
  std::size_t checkpoint_every = 0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  // Bottom hidden width and cut-layer width for the NN algorithms.
  std::size_t bottom_hidden = 32;
  std::size_t cut_width = 16;
  std::size_t top_hidden = 16;
  // Image data under VHNN/VSNN: party B's bottom is locally connected with
  // this receptive field (0 keeps it dense). Channel counts are
  // bottom_hidden and cut_width divided by the pixel count, at least 1.
  std::size_t local_patch = 3;
  // VLR on binary data: softmax over two per-class summed logits instead of
  // a single sigmoid logit. Multiclass VLR always uses softmax.
  bool vlr_softmax = false;

  ProtectionBinding protection;
  RecordSwitches record;

  void validate(std::size_t train_rows) const;
};

// One batch as seen across the cut layer.
struct CutLayerBatch {
  std::vector<std::size_t> indices;
  Tensor2 u_a;
  Tensor2 u_b;
  Tensor2 z;             // aggregated input to the top model
  Tensor2 probabilities;
  Tensor2 d_a;
  Tensor2 d_b;  // after protection: what party B receives
  std::vector<Tensor2> grad_theta_b;  // per bottom parameter, from d_b
};

// What the passive party can observe about one batch.
struct PassiveObservation {
  const std::vector<std::size_t>* indices;
  const Tensor2* u_b;
  const Tensor2* d_b;
  const std::vector<Tensor2>* grad_theta_b;
};
PassiveObservation passive_view(const CutLayerBatch& batch);

struct Checkpoint {
  std::size_t epoch = 0;
  Mlp bottom_b;
};

struct VulnerabilityLog {
  std::vector<std::vector<CutLayerBatch>> epochs;
  std::vector<Checkpoint> checkpoints;
};

struct TrainResult {
  JointModel model;
  VulnerabilityLog log;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

JointModel init_joint_model(AlgorithmKind algorithm, const VerticalDataset& data,
                            const TrainConfig& cfg);

TrainResult train_joint(AlgorithmKind algorithm, const VerticalDataset& data, const TrainConfig& cfg);
// Continues training an existing model (used by tests with hand-set weights).
TrainResult train_joint(JointModel model, const VerticalDataset& data, const TrainConfig& cfg);

enum class UtilityMetric { kAuc, kAcc };
UtilityMetric default_metric(std::size_t num_classes);

struct InferenceOutput {
  Tensor2 u_b;
  Tensor2 probabilities;
};

// Passive output including the PRECODE bottleneck when present.
Tensor2 passive_forward(const JointModel& model, const Tensor2& features_b);
// Top-model probabilities given a passive output.
Tensor2 active_forward(const JointModel& model, const Tensor2& features_a, const Tensor2& u_b);
InferenceOutput inference_forward(const JointModel& model, const Tensor2& features_b,
                                  const Tensor2& features_a);

// Percent AUC (binary) or accuracy.
double evaluate_utility(const JointModel& model, const VerticalDataset& data, UtilityMetric metric);
// Scores for the positive class (binary) or predicted classes.
std::vector<double> positive_scores(const Tensor2& probabilities, HeadKind head);

}  // namespace vfl
