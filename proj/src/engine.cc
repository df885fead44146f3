#include "vfl/engine.h"

#include <cmath>

#include "vfl/error.h"
#include "vfl/metrics.h"

namespace vfl {
namespace {

constexpr std::uint64_t kStreamInitA = 1, kStreamInitB = 2, kStreamShuffle = 10,
                        kStreamProtect = 11, kStreamMix = 12, kStreamPrecode = 13,
                        kStreamInference = 14;

bool all_finite(const std::vector<Tensor2*>& params) {
  for (const Tensor2* p : params)
    if (!p->all_finite()) return false;
  return true;
}

void append(std::vector<Tensor2>& dst, std::vector<Tensor2> src) {
  for (auto& t : src) dst.push_back(std::move(t));
}

Tensor2 head_probabilities(const JointModel& m, const Tensor2& z) {
  return m.head == HeadKind::kSigmoid ? sigmoid(z) : softmax(z);
}

void check_compatible(AlgorithmKind algorithm, const VerticalDataset& data) {
  data.validate();
  if (algorithm == AlgorithmKind::kVsnn && data.features_a.cols() > 0)
    throw ConfigError("VSNN: party A must not hold features (features_a has " +
                      std::to_string(data.features_a.cols()) + " columns)");
  if (algorithm != AlgorithmKind::kVsnn && data.features_a.cols() == 0)
    throw ConfigError(std::string(to_string(algorithm)) + ": party A needs at least one feature column");
  if (data.features_b.cols() == 0) throw ConfigError("party B needs at least one feature column");
}

}  // namespace

const char* to_string(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::kVlr:
      return "VLR";
    case AlgorithmKind::kVhnn:
      return "VHNN";
    case AlgorithmKind::kVsnn:
      return "VSNN";
  }
  return "?";
}

AlgorithmKind algorithm_kind_from_string(const std::string& name) {
  for (auto k : {AlgorithmKind::kVlr, AlgorithmKind::kVhnn, AlgorithmKind::kVsnn})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown algorithm '" + name + "' (expected VLR, VHNN or VSNN)");
}

std::vector<Tensor2*> PartyState::parameters() {
  std::vector<Tensor2*> out = bottom.parameters();
  for (Tensor2* p : top.parameters()) out.push_back(p);
  if (bottleneck)
    for (Tensor2* p : bottleneck->parameters()) out.push_back(p);
  return out;
}

PassiveObservation passive_view(const CutLayerBatch& batch) {
  return {&batch.indices, &batch.u_b, &batch.d_b, &batch.grad_theta_b};
}

void TrainConfig::validate(std::size_t train_rows) const {
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0 || batch_size > train_rows)
    throw ConfigError("train.batch_size must lie in [1, " + std::to_string(train_rows) + "]");
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be >= 0");
  if (bottom_hidden == 0 || cut_width == 0 || top_hidden == 0)
    throw ConfigError("train: layer widths must be >= 1");
  protection.validate();
  if (protection.kind == ProtectionKind::kMixup &&
      static_cast<std::size_t>(protection.strength) > batch_size)
    throw ConfigError("mixup: k exceeds train.batch_size");
}

namespace {

Mlp passive_nn_bottom(const VerticalDataset& data, const TrainConfig& cfg, Rng& rng) {
  const std::vector<Activation> acts{Activation::kRelu, Activation::kRelu};
  const std::size_t pixels = data.image_rows_b * data.image_cols_b;
  if (cfg.local_patch == 0 || pixels == 0 || pixels != data.features_b.cols())
    return Mlp({data.features_b.cols(), cfg.bottom_hidden, cfg.cut_width}, acts, rng);
  LocalGeometry g;
  g.rows = data.image_rows_b;
  g.cols = data.image_cols_b;
  g.patch = cfg.local_patch;
  g.channels = {std::max<std::size_t>(1, cfg.bottom_hidden / pixels), std::max<std::size_t>(1, cfg.cut_width / pixels)};
  return Mlp::local(g, acts, rng);
}

}  // namespace

JointModel init_joint_model(AlgorithmKind algorithm, const VerticalDataset& data,
                            const TrainConfig& cfg) {
  check_compatible(algorithm, data);
  JointModel m;
  m.algorithm = algorithm;
  m.num_classes = data.num_classes;
  m.seed = cfg.seed;
  m.head = (algorithm == AlgorithmKind::kVlr && data.num_classes == 2 && !cfg.vlr_softmax)
               ? HeadKind::kSigmoid
               : HeadKind::kSoftmax;
  const std::size_t out = m.head == HeadKind::kSigmoid ? 1 : data.num_classes;
  const std::size_t da = data.features_a.cols(), db = data.features_b.cols();
  Rng root(cfg.seed);
  Rng rng_a = root.split({kStreamInitA});
  Rng rng_b = root.split({kStreamInitB});
  m.active.role = PartyRole::kActive;
  m.passive.role = PartyRole::kPassive;
  std::size_t cut = cfg.cut_width;
  switch (algorithm) {
    case AlgorithmKind::kVlr:
      m.active.bottom = Mlp({da, out}, {Activation::kIdentity}, rng_a);
      m.passive.bottom = Mlp({db, out}, {Activation::kIdentity}, rng_b);
      cut = out;
      break;
    case AlgorithmKind::kVhnn:
      m.active.bottom =
          Mlp({da, cfg.bottom_hidden, cfg.cut_width}, {Activation::kRelu, Activation::kRelu}, rng_a);
      m.passive.bottom = passive_nn_bottom(data, cfg, rng_b);
      cut = m.passive.bottom.output_dim();
      m.active.top = Mlp({cfg.cut_width + cut, cfg.top_hidden, out},
                         {Activation::kRelu, Activation::kSoftmax}, rng_a);
      break;
    case AlgorithmKind::kVsnn:
      m.passive.bottom = passive_nn_bottom(data, cfg, rng_b);
      cut = m.passive.bottom.output_dim();
      m.active.top = Mlp({cut, cfg.top_hidden, out}, {Activation::kRelu, Activation::kSoftmax}, rng_a);
      break;
  }
  if (cfg.protection.kind == ProtectionKind::kPrecode)
    m.passive.bottleneck = make_bottleneck(cut, cfg.protection.precode_latent, rng_b);
  const double momentum = cfg.optimizer == OptimizerKind::kSgdMomentum ? cfg.momentum : 0.0;
  m.active.optimizer = Sgd(cfg.learning_rate, momentum);
  m.passive.optimizer = Sgd(cfg.learning_rate, momentum);
  return m;
}

TrainResult train_joint(AlgorithmKind algorithm, const VerticalDataset& data, const TrainConfig& cfg) {
  cfg.validate(data.size());
  return train_joint(init_joint_model(algorithm, data, cfg), data, cfg);
}

TrainResult train_joint(JointModel model, const VerticalDataset& data, const TrainConfig& cfg) {
  check_compatible(model.algorithm, data);
  cfg.validate(data.size());
  if (cfg.protection.kind == ProtectionKind::kMarvell && data.num_classes != 2)
    throw ConfigError("marvell: binary classification only (dataset has " +
                      std::to_string(data.num_classes) + " classes)");

  TrainResult result;
  JointModel& m = model;
  const Rng root(cfg.seed);
  const std::size_t n = data.size();
  const bool sigmoid_head = m.head == HeadKind::kSigmoid;
  const ProtectionBinding& prot = cfg.protection;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = root.split({kStreamShuffle, epoch});
    const auto order = shuffle_rng.permutation(n);
    std::vector<CutLayerBatch> batches;
    double loss_sum = 0.0;
    std::size_t batch_count = 0;

    for (std::size_t start = 0, bi = 0; start < n; start += cfg.batch_size, ++bi) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const std::size_t b = idx.size();
      Tensor2 xa = data.features_a.gather_rows(idx);
      Tensor2 xb = data.features_b.gather_rows(idx);
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) y[i] = data.labels[idx[i]];
      Tensor2 targets = one_hot(y, m.num_classes);

      // Party A draws the mixing plan and shares it with B.
      if (prot.kind == ProtectionKind::kMixup) {
        const auto k = static_cast<std::size_t>(prot.strength);
        if (k <= b) {
          Rng mix_rng = root.split({kStreamMix, epoch, bi});
          const MixPlan plan = draw_mix_plan(b, k, mix_rng);
          xa = mix_rows(xa, plan);
          xb = mix_rows(xb, plan);
          targets = mix_rows(targets, plan);
        }
      }
      if (sigmoid_head) targets = targets.slice_cols(1, 2);

      // Steps 1-2: party B forward, u^B sent to A.
      Tape tb;
      Mlp::Bound bound_b;
      BottleneckBound bound_vb;
      Var kl{};
      Var ub = m.passive.bottom.forward(tb, tb.constant(xb), &bound_b);
      if (m.passive.bottleneck) {
        Rng pre_rng = root.split({kStreamPrecode, epoch, bi});
        ub = precode_bottleneck(tb, ub, *m.passive.bottleneck, pre_rng, &bound_vb, &kl);
      }
      const Tensor2 u_b = tb.value(ub);

      // Step 3: party A aggregates and evaluates the loss.
      Tape ta;
      const Var ub_leaf = ta.leaf(u_b);
      Mlp::Bound bound_ab, bound_at;
      Var ua{};
      const bool has_a = !m.active.bottom.empty();
      if (has_a) ua = m.active.bottom.forward(ta, ta.constant(xa), &bound_ab);
      Var z{};
      switch (m.algorithm) {
        case AlgorithmKind::kVlr:
          z = ta.add(ua, ub_leaf);
          break;
        case AlgorithmKind::kVhnn:
          z = m.active.top.forward(ta, ta.concat_cols(ua, ub_leaf), &bound_at);
          break;
        case AlgorithmKind::kVsnn:
          z = m.active.top.forward(ta, ub_leaf, &bound_at);
          break;
      }
      const Var loss = sigmoid_head ? ta.sigmoid_cross_entropy(z, targets)
                                    : ta.softmax_cross_entropy(z, targets);
      const double loss_value = ta.value(loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(bi + 1));
      // Step 4: one backward pass gives A's gradients and d^A, d^B.
      ta.backward(loss);
      std::vector<Tensor2> grads_a;
      if (has_a) grads_a = m.active.bottom.gradients(ta, bound_ab);
      if (!m.active.top.empty()) append(grads_a, m.active.top.gradients(ta, bound_at));
      const Tensor2 d_b = ta.grad(ub_leaf);

      // Step 5: protection on the message to B. Labels reach only the
      // label-aware transform, which runs on A's side.
      Rng prot_rng = root.split({kStreamProtect, epoch, bi});
      Tensor2 d_sent = prot.transforms_cut_gradient() ? protect_cut_gradient(prot, d_b, y, prot_rng) : d_b;

      // Step 6: B backpropagates the received gradient.
      std::vector<Tape::Seed> seeds{{ub, d_sent}};
      if (m.passive.bottleneck) seeds.push_back({kl, Tensor2(1, 1, prot.precode_beta)});
      tb.backward(seeds);
      std::vector<Tensor2> grads_b = m.passive.bottom.gradients(tb, bound_b);
      std::vector<Tensor2> grads_theta_b;
      if (cfg.record.param_gradients) grads_theta_b = grads_b;
      if (m.passive.bottleneck)
        append(grads_b, bottleneck_gradients(tb, *m.passive.bottleneck, bound_vb));

      CutLayerBatch rec;
      const bool record_any = cfg.record.cut_gradients || cfg.record.param_gradients ||
                              cfg.record.predictions || cfg.record.active_outputs;
      if (record_any) {
        rec.indices = idx;
        if (cfg.record.cut_gradients) {
          rec.u_b = u_b;
          rec.d_b = d_sent;
        }
        rec.grad_theta_b = std::move(grads_theta_b);
        if (cfg.record.predictions) {
          rec.z = ta.value(z);
          rec.probabilities = head_probabilities(m, ta.value(z));
        }
        if (cfg.record.active_outputs && has_a) {
          rec.u_a = ta.value(ua);
          rec.d_a = ta.grad(ua);
        }
      }

      auto params_a = m.active.parameters();
      auto params_b = m.passive.parameters();
      m.active.optimizer.step(params_a, grads_a);
      m.passive.optimizer.step(params_b, grads_b);
      if (!all_finite(params_a) || !all_finite(params_b))
        throw TrainingError("training diverged: non-finite parameters at epoch " +
                            std::to_string(epoch + 1) + ", batch " + std::to_string(bi + 1));
      if (record_any) batches.push_back(std::move(rec));
      loss_sum += loss_value;
      ++batch_count;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batch_count));
    result.log.epochs.push_back(std::move(batches));
    const std::size_t e = epoch + 1;
    if (e == cfg.epochs || (cfg.record.checkpoint_every > 0 && e % cfg.record.checkpoint_every == 0))
      result.log.checkpoints.push_back({e, m.passive.bottom});
  }
  result.model = std::move(model);
  return result;
}

UtilityMetric default_metric(std::size_t num_classes) {
  return num_classes == 2 ? UtilityMetric::kAuc : UtilityMetric::kAcc;
}

Tensor2 passive_forward(const JointModel& model, const Tensor2& features_b) {
  Tensor2 u = model.passive.bottom.forward(features_b);
  if (model.passive.bottleneck) {
    Rng rng(mix_keys(model.seed, {kStreamInference}));
    u = precode_bottleneck(u, *model.passive.bottleneck, rng).q_hat;
  }
  return u;
}

Tensor2 active_forward(const JointModel& model, const Tensor2& features_a, const Tensor2& u_b) {
  switch (model.algorithm) {
    case AlgorithmKind::kVlr: {
      const Tensor2 u_a = model.active.bottom.forward(features_a);
      require_shape(u_a.same_shape(u_b), "active_forward: u^A " + u_a.shape_string() +
                                             " and u^B " + u_b.shape_string() + " differ");
      return head_probabilities(model, u_a + u_b);
    }
    case AlgorithmKind::kVhnn: {
      const Tensor2 u_a = model.active.bottom.forward(features_a);
      require_shape(u_a.rows() == u_b.rows(), "active_forward: row counts differ");
      return model.active.top.forward(concat_cols(u_a, u_b));
    }
    case AlgorithmKind::kVsnn:
      return model.active.top.forward(u_b);
  }
  return {};
}

InferenceOutput inference_forward(const JointModel& model, const Tensor2& features_b,
                                  const Tensor2& features_a) {
  require_shape(features_b.cols() == model.passive.bottom.input_dim(),
                "inference_forward: features_b has " + std::to_string(features_b.cols()) +
                    " columns, model expects " + std::to_string(model.passive.bottom.input_dim()));
  if (!model.active.bottom.empty())
    require_shape(features_a.cols() == model.active.bottom.input_dim() &&
                      features_a.rows() == features_b.rows(),
                  "inference_forward: features_a shape " + features_a.shape_string());
  InferenceOutput out;
  out.u_b = passive_forward(model, features_b);
  out.probabilities = active_forward(model, features_a, out.u_b);
  return out;
}

std::vector<double> positive_scores(const Tensor2& probabilities, HeadKind head) {
  const std::size_t col = head == HeadKind::kSigmoid ? 0 : 1;
  require_shape(probabilities.cols() > col, "positive_scores: not a binary head");
  std::vector<double> s(probabilities.rows());
  for (std::size_t r = 0; r < s.size(); ++r) s[r] = probabilities(r, col);
  return s;
}

double evaluate_utility(const JointModel& model, const VerticalDataset& data, UtilityMetric metric) {
  if (metric == UtilityMetric::kAuc && data.num_classes != 2)
    throw ConfigError("evaluate_utility: AUC needs a binary task (dataset has " +
                      std::to_string(data.num_classes) + " classes)");
  const auto out = inference_forward(model, data.features_b, data.features_a);
  if (metric == UtilityMetric::kAuc) return auc(positive_scores(out.probabilities, model.head), data.labels);
  std::vector<int> pred;
  if (model.head == HeadKind::kSigmoid) {
    for (std::size_t r = 0; r < out.probabilities.rows(); ++r) pred.push_back(out.probabilities(r, 0) >= 0.5);
  } else {
    pred = argmax_rows(out.probabilities);
  }
  return accuracy(pred, data.labels);
}

}  // namespace vfl
