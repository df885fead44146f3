#include "vfl/attacks.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "vfl/error.h"
#include "vfl/metrics.h"

namespace vfl {

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNs:
      return "NS";
    case AttackKind::kDs:
      return "DS";
    case AttackKind::kDl:
      return "DL";
    case AttackKind::kRr:
      return "RR";
    case AttackKind::kGi:
      return "GI";
    case AttackKind::kMc:
      return "MC";
    case AttackKind::kMi:
      return "MI";
  }
  return "?";
}

std::vector<AttackKind> all_attacks() {
  return {AttackKind::kNs, AttackKind::kDs, AttackKind::kDl, AttackKind::kRr,
          AttackKind::kGi, AttackKind::kMc, AttackKind::kMi};
}

AttackKind attack_kind_from_string(const std::string& name) {
  for (auto k : all_attacks())
    if (name == to_string(k)) return k;
  throw ConfigError("unknown attack '" + name + "'");
}

bool is_label_attack(AttackKind kind) { return kind != AttackKind::kMi; }

LabelScoreSet direct_label_inference(std::span<const CutLayerBatch> batches, std::size_t num_classes,
                                     Rng& rng) {
  LabelScoreSet out;
  for (const auto& batch : batches) {
    const Tensor2& d = batch.d_b;
    require_shape(d.rows() == batch.indices.size(), "direct_label_inference: d^B rows differ from batch");
    for (std::size_t r = 0; r < d.rows(); ++r) {
      auto row = d.row(r);
      const auto it = std::min_element(row.begin(), row.end());
      out.indices.push_back(batch.indices[r]);
      if (row.empty() || *it >= 0.0) {
        ++out.undecided;
        out.scores.push_back(0.5);
        out.predictions.push_back(static_cast<int>(rng.uniform_index(num_classes)));
        continue;
      }
      const int cls = row.size() == 1 ? 1 : static_cast<int>(it - row.begin());
      out.predictions.push_back(cls);
      out.scores.push_back(cls == 1 ? 1.0 : 0.0);
    }
  }
  return out;
}

LabelScoreSet norm_scoring(std::span<const CutLayerBatch> batches) {
  LabelScoreSet out;
  for (const auto& batch : batches)
    for (std::size_t r = 0; r < batch.d_b.rows(); ++r) {
      out.indices.push_back(batch.indices[r]);
      out.scores.push_back(batch.d_b.row_norm(r));
    }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "cosine_similarity: length mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

LabelScoreSet direction_scoring(std::span<const CutLayerBatch> batches,
                                std::span<const std::optional<std::size_t>> known_positive) {
  require_shape(known_positive.size() == batches.size(), "direction_scoring: one entry per batch required");
  LabelScoreSet out;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    if (!known_positive[i]) {
      ++out.skipped_batches;
      continue;
    }
    const Tensor2& d = batches[i].d_b;
    const auto ref = d.row(*known_positive[i]);
    for (std::size_t r = 0; r < d.rows(); ++r) {
      out.indices.push_back(batches[i].indices[r]);
      out.scores.push_back(cosine_similarity(d.row(r), ref));
      out.predictions.push_back(out.scores.back() > 0.0 ? 1 : 0);
    }
  }
  return out;
}

ResidueResult residue_reconstruct(const Tensor2& x_b, const Tensor2& grad_w_b) {
  require_shape(x_b.cols() == grad_w_b.rows(),
                "residue_reconstruct: x^B " + x_b.shape_string() + " vs gradient " + grad_w_b.shape_string());
  const auto b = static_cast<Eigen::Index>(x_b.rows());
  const auto f = static_cast<Eigen::Index>(x_b.cols());
  const auto k = static_cast<Eigen::Index>(grad_w_b.cols());
  Eigen::MatrixXd a(f, b);  // x^T
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index c = 0; c < f; ++c) a(c, r) = x_b(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::MatrixXd g(f, k);
  for (Eigen::Index r = 0; r < f; ++r)
    for (Eigen::Index c = 0; c < k; ++c) g(r, c) = grad_w_b(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  const Eigen::MatrixXd sol = cod.solve(g);
  ResidueResult out;
  out.rank_deficient = cod.rank() < b;
  out.d_tilde = Tensor2(x_b.rows(), grad_w_b.cols());
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index c = 0; c < k; ++c) out.d_tilde(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sol(r, c);
  return out;
}

LabelScoreSet residue_scores(const ResidueResult& r, std::span<const std::size_t> indices) {
  require_shape(indices.size() == r.d_tilde.rows(), "residue_scores: index count differs");
  LabelScoreSet out;
  const std::size_t cols = r.d_tilde.cols();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.indices.push_back(indices[i]);
    out.scores.push_back(-r.d_tilde(i, cols - 1));
    auto row = r.d_tilde.row(i);
    const int cls = cols == 1 ? (row[0] < 0 ? 1 : 0)
                              : static_cast<int>(std::min_element(row.begin(), row.end()) - row.begin());
    out.predictions.push_back(cls);
  }
  return out;
}

LabelScoreSet residue_attack(std::span<const CutLayerBatch> batches, const Tensor2& features_b) {
  LabelScoreSet out;
  for (const auto& batch : batches) {
    if (batch.grad_theta_b.empty())
      throw ContractError("residue_attack: parameter gradients were not recorded");
    const Tensor2 x = features_b.gather_rows(batch.indices);
    const auto part = residue_scores(residue_reconstruct(x, batch.grad_theta_b[0]), batch.indices);
    out.indices.insert(out.indices.end(), part.indices.begin(), part.indices.end());
    out.scores.insert(out.scores.end(), part.scores.begin(), part.scores.end());
    out.predictions.insert(out.predictions.end(), part.predictions.begin(), part.predictions.end());
  }
  return out;
}

GiResult gradient_inversion(const Tensor2& x_b, const Tensor2& u_b, const Tensor2& grad_w_b,
                            const Tensor2* grad_bias_b, const GiOptions& options) {
  const std::size_t b = x_b.rows(), k = grad_w_b.cols();
  require_shape(x_b.cols() == grad_w_b.rows() && u_b.rows() == b && u_b.cols() == k,
                "gradient_inversion: shapes x " + x_b.shape_string() + ", u " + u_b.shape_string() +
                    ", grad " + grad_w_b.shape_string());
  if (grad_bias_b) require_shape(grad_bias_b->rows() == 1 && grad_bias_b->cols() == k, "gradient_inversion: bias gradient shape");
  const bool sigmoid_head = k == 1;
  double norm_sq = 0.0;
  for (double v : grad_w_b.data()) norm_sq += v * v;
  if (grad_bias_b)
    for (double v : grad_bias_b->data()) norm_sq += v * v;
  const double inv_norm = norm_sq > 0 ? 1.0 / norm_sq : 1.0;
  const Tensor2 xt = x_b.transpose();
  const Tensor2 ones(1, b, 1.0);

  Tensor2 u_a(b, k), logits(b, k);
  GiResult res;
  auto objective = [&](Tape& tape, Var& ua, Var& lg) {
    ua = tape.leaf(u_a);
    lg = tape.leaf(logits);
    const Var pred = tape.add(tape.constant(u_b), ua);
    const Var diff = sigmoid_head ? tape.sub(tape.sigmoid(pred), tape.sigmoid(lg))
                                  : tape.sub(tape.softmax(pred), tape.softmax(lg));
    const double s = 1.0 / static_cast<double>(b);
    Var err = tape.sub(tape.scale(tape.matmul(tape.constant(xt), diff), s), tape.constant(grad_w_b));
    Var loss = tape.squared_norm(err);
    if (grad_bias_b) {
      const Var eb = tape.sub(tape.scale(tape.matmul(tape.constant(ones), diff), s), tape.constant(*grad_bias_b));
      loss = tape.add(loss, tape.squared_norm(eb));
    }
    return tape.scale(loss, inv_norm);
  };
  for (std::size_t step = 0; step <= options.steps; ++step) {
    Tape tape;
    Var ua, lg;
    const Var loss = objective(tape, ua, lg);
    res.trace.push_back(tape.value(loss)(0, 0));
    if (step == options.steps) break;
    tape.backward(loss);
    u_a = u_a - tape.grad(ua) * options.learning_rate;
    logits = logits - tape.grad(lg) * options.learning_rate;
  }
  res.u_a = u_a;
  res.label_probabilities = sigmoid_head ? sigmoid(logits) : softmax(logits);
  res.converged = res.trace.back() <= options.tolerance;
  return res;
}

LabelScoreSet gradient_inversion_attack(std::span<const CutLayerBatch> batches,
                                        const Tensor2& features_b, const GiOptions& options) {
  LabelScoreSet out;
  for (const auto& batch : batches) {
    if (batch.grad_theta_b.size() != 2 || batch.u_b.rows() != batch.indices.size())
      throw ContractError("gradient_inversion_attack: needs logged u^B and single-layer parameter gradients");
    const Tensor2 x = features_b.gather_rows(batch.indices);
    const auto r = gradient_inversion(x, batch.u_b, batch.grad_theta_b[0], &batch.grad_theta_b[1], options);
    const Tensor2& p = r.label_probabilities;
    const auto pred = p.cols() == 1 ? std::vector<int>{} : argmax_rows(p);
    for (std::size_t i = 0; i < batch.indices.size(); ++i) {
      out.indices.push_back(batch.indices[i]);
      out.scores.push_back(p(i, p.cols() - 1));
      out.predictions.push_back(p.cols() == 1 ? (p(i, 0) >= 0.5 ? 1 : 0) : pred[i]);
    }
  }
  return out;
}

void fit_classifier(Mlp& model, const Tensor2& x, std::span<const int> labels, std::size_t epochs,
                    double learning_rate) {
  if (model.layers().empty() || model.layers().back().activation != Activation::kSoftmax)
    throw ContractError("fit_classifier: model must end in a softmax layer");
  const Tensor2 targets = one_hot(labels, model.output_dim());
  Sgd opt(learning_rate);
  for (std::size_t e = 0; e < epochs; ++e) {
    Tape tape;
    Mlp::Bound bound;
    const Var z = model.forward(tape, tape.constant(x), &bound);
    tape.backward(tape.softmax_cross_entropy(z, targets));
    opt.step(model.parameters(), model.gradients(tape, bound));
  }
}

namespace {

double omega(const Tensor2& probs, std::span<const int> labels, std::size_t num_classes) {
  if (num_classes == 2) {
    std::vector<double> s(probs.rows());
    for (std::size_t r = 0; r < s.size(); ++r) s[r] = probs(r, probs.cols() - 1);
    return auc(s, labels);
  }
  return accuracy(argmax_rows(probs), labels);
}

std::vector<std::size_t> layer_widths(const Mlp& m) {
  std::vector<std::size_t> w{m.input_dim()};
  for (const auto& l : m.layers()) w.push_back(l.weights.cols());
  return w;
}

}  // namespace

McResult model_completion(const Mlp& bottom_b, bool vlr, std::size_t num_classes,
                          const Tensor2& aux_x, std::span<const int> aux_y,
                          const Tensor2& eval_x, std::span<const int> eval_y,
                          const McOptions& options) {
  require_shape(aux_x.rows() == aux_y.size() && eval_x.rows() == eval_y.size(),
                "model_completion: feature and label counts differ");
  {
    std::vector<char> seen(num_classes, 0);
    for (int y : aux_y) seen.at(static_cast<std::size_t>(y)) = 1;
    for (std::size_t c = 0; c < num_classes; ++c)
      if (!seen[c]) throw ConfigError("model_completion: auxiliary set lacks class " + std::to_string(c));
  }
  Rng rng(mix_keys(options.seed, {0x3C}));
  McResult res;
  const Tensor2 u_eval = bottom_b.forward(eval_x);
  if (vlr) {
    res.probabilities_mc = u_eval.cols() == 1 ? sigmoid(u_eval) : softmax(u_eval);
  } else {
    const Tensor2 u_aux = bottom_b.forward(aux_x);
    Mlp head({u_aux.cols(), options.head_hidden, num_classes}, {Activation::kRelu, Activation::kSoftmax}, rng);
    fit_classifier(head, u_aux, aux_y, options.epochs, options.learning_rate);
    res.probabilities_mc = head.forward(u_eval);
  }

  // Local baseline: the same architecture trained from scratch on aux only.
  std::vector<std::size_t> widths = layer_widths(bottom_b);
  std::vector<Activation> acts;
  for (const auto& l : bottom_b.layers()) acts.push_back(l.activation);
  if (vlr) {
    widths.back() = num_classes;
    acts.back() = Activation::kSoftmax;
  } else {
    widths.push_back(options.head_hidden);
    widths.push_back(num_classes);
    acts.push_back(Activation::kRelu);
    acts.push_back(Activation::kSoftmax);
  }
  Mlp local(widths, acts, rng);
  fit_classifier(local, aux_x, aux_y, options.epochs, options.learning_rate);
  res.probabilities_loc = local.forward(eval_x);
  if (res.probabilities_mc.cols() == 1) {
    // Sigmoid scores: append the complementary column so omega() reads column 1.
    Tensor2 p(u_eval.rows(), 2);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      p(r, 1) = res.probabilities_mc(r, 0);
      p(r, 0) = 1.0 - p(r, 1);
    }
    res.probabilities_mc = std::move(p);
  }
  res.omega_mc = omega(res.probabilities_mc, eval_y, num_classes);
  res.omega_loc = omega(res.probabilities_loc, eval_y, num_classes);
  return res;
}

const char* to_string(ShadowKind kind) {
  switch (kind) {
    case ShadowKind::kExact:
      return "exact";
    case ShadowKind::kSame:
      return "same";
    case ShadowKind::kDifferentWidths:
      return "different_widths";
    case ShadowKind::kFc:
      return "fc";
    case ShadowKind::kLinear:
      return "linear";
  }
  return "?";
}

ShadowKind shadow_kind_from_string(const std::string& name) {
  for (auto k : {ShadowKind::kExact, ShadowKind::kSame, ShadowKind::kDifferentWidths, ShadowKind::kFc,
                 ShadowKind::kLinear})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown shadow kind '" + name + "'");
}

Reconstruction invert_bottom(const Mlp& bottom, const Tensor2& u_target, Tensor2 x0, std::size_t steps,
                             double learning_rate) {
  require_shape(x0.rows() == u_target.rows() && x0.cols() == bottom.input_dim() &&
                    u_target.cols() == bottom.output_dim(),
                "invert_bottom: shapes do not match the model");
  Reconstruction rec;
  Tensor2 x = std::move(x0);
  const double inv_rows = 1.0 / static_cast<double>(std::max<std::size_t>(1, x.rows()));
  for (std::size_t step = 0; step <= steps; ++step) {
    Tape tape;
    const Var xv = tape.leaf(x);
    const Var out = bottom.forward(tape, xv, nullptr);
    const Var loss = tape.scale(tape.squared_norm(tape.sub(out, tape.constant(u_target))), inv_rows);
    rec.trace.push_back(tape.value(loss)(0, 0));
    if (step == steps) break;
    tape.backward(loss);
    x = x - tape.grad(xv) * learning_rate;
    for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
  }
  rec.x = std::move(x);
  return rec;
}

MiResult model_inversion(const JointModel& model, const Tensor2& aux_xa, const Tensor2& aux_xb,
                         std::span<const int> aux_y, const Tensor2& u_b, const MiOptions& options) {
  require_shape(aux_xb.rows() == aux_y.size() && aux_xa.rows() == aux_y.size(),
                "model_inversion: aux shards and labels differ in rows");
  const Mlp& truth = model.passive.bottom;
  Rng rng(mix_keys(options.seed, {0x4D1}));
  MiResult res;
  const std::size_t in = aux_xb.cols(), out = u_b.cols();
  switch (options.shadow) {
    case ShadowKind::kExact:
      res.shadow = truth;
      break;
    case ShadowKind::kSame:
      res.shadow = truth.reinitialized(rng);
      break;
    case ShadowKind::kDifferentWidths: {
      std::vector<Activation> acts;
      for (const auto& l : truth.layers()) acts.push_back(l.activation);
      if (const auto& g = truth.geometry()) {
        // Wider receptive field and twice the hidden channels.
        LocalGeometry wide = *g;
        wide.patch += 2;
        for (std::size_t l = 0; l + 1 < wide.channels.size(); ++l) wide.channels[l] *= 2;
        res.shadow = Mlp::local(wide, acts, rng);
        break;
      }
      std::vector<std::size_t> widths{in};
      for (const auto& l : truth.layers()) widths.push_back(std::max<std::size_t>(2, l.weights.cols() * 2));
      widths.back() = out;
      res.shadow = Mlp(widths, acts, rng);
      break;
    }
    case ShadowKind::kFc: {
      std::vector<Activation> acts;
      for (const auto& l : truth.layers()) acts.push_back(l.activation);
      res.shadow = Mlp(layer_widths(truth), acts, rng);
      break;
    }
    case ShadowKind::kLinear:
      res.shadow = Mlp({in, out}, {truth.layers().back().activation}, rng);
      break;
  }

  if (options.shadow != ShadowKind::kExact) {
    // Fit the shadow through A's frozen bottom and top on the joint loss.
    const bool sigmoid_head = model.head == HeadKind::kSigmoid;
    Tensor2 targets = one_hot(aux_y, model.num_classes);
    if (sigmoid_head) targets = targets.slice_cols(1, 2);
    const Tensor2 u_a = model.active.bottom.empty() ? Tensor2() : model.active.bottom.forward(aux_xa);
    Sgd opt(options.shadow_learning_rate);
    for (std::size_t e = 0; e < options.shadow_epochs; ++e) {
      Tape tape;
      Mlp::Bound bound;
      const Var ub = res.shadow.forward(tape, tape.constant(aux_xb), &bound);
      Var z{};
      switch (model.algorithm) {
        case AlgorithmKind::kVlr:
          z = tape.add(tape.constant(u_a), ub);
          break;
        case AlgorithmKind::kVhnn:
          z = model.active.top.forward(tape, tape.concat_cols(tape.constant(u_a), ub), nullptr);
          break;
        case AlgorithmKind::kVsnn:
          z = model.active.top.forward(tape, ub, nullptr);
          break;
      }
      const Var loss = sigmoid_head ? tape.sigmoid_cross_entropy(z, targets) : tape.softmax_cross_entropy(z, targets);
      if (!std::isfinite(tape.value(loss)(0, 0)))
        throw TrainingError("model_inversion: shadow training diverged at epoch " + std::to_string(e + 1));
      tape.backward(loss);
      opt.step(res.shadow.parameters(), res.shadow.gradients(tape, bound));
    }
  }

  Tensor2 x0(u_b.rows(), in);
  for (double& v : x0.data()) v = rng.uniform();
  res.random_baseline = x0;
  res.reconstruction = invert_bottom(res.shadow, u_b, std::move(x0), options.steps, options.learning_rate);
  return res;
}

}  // namespace vfl
