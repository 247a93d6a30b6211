// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/net.hpp"
#include "msd/prob.hpp"

namespace msd {

struct DistillConfig {
  double tau = 4.0;
  double lambda = 0.5;
  enum class Mode { kNone, kKd, kMsd };
  Mode mode = Mode::kMsd;
};

inline void validate(const DistillConfig& cfg) {
  if (cfg.tau <= 0.0) throw ParamError("tau must be positive");
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ParamError("lambda must be in [0,1]");
}

/// Per-sample gates on the three distillation terms (multi, image, text).
struct ModalityWeights {
  double w = 1.0;
  double w_v = 0.0;
  double w_t = 0.0;
};

/// Teacher's tempered prediction for one input. The teacher is frozen: this
/// is the only way its outputs enter any training path.
inline SoftPrediction soft_targets(const DenseNet& teacher, std::span<const double> input,
                                   double tau) {
  return softmax_temp(forward(teacher, input), tau);
}

/// tau^2 times the batch-mean KL between teacher and student tempered
/// outputs on the given inputs.
inline double kd_distill_loss(const DenseNet& teacher, const DenseNet& student,
                              std::span<const std::vector<double>> inputs, double tau) {
  if (inputs.empty()) throw ParamError("empty batch");
  double sum = 0.0;
  for (const std::vector<double>& x : inputs)
    sum += kl_div(soft_targets(teacher, x, tau), soft_targets(student, x, tau));
  return tau * tau * (sum / static_cast<double>(inputs.size()));
}

/// Three-term modality-specific distillation loss:
///   tau^2/|B| * sum_i [ w_i KL(multi) + w_v_i KL(image) + w_t_i KL(text) ]
/// with each KL between teacher and student tempered outputs on the
/// corresponding view of sample i.
inline double msd_distill_loss(const DenseNet& teacher, const DenseNet& student,
                               std::span<const MultimodalSample> batch,
                               std::span<const ModalityWeights> weights, double tau) {
  if (batch.empty()) throw ParamError("empty batch");
  if (batch.size() != weights.size()) throw ShapeError("one weight triple per sample required");
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto term = [&](ModalityView v) {
      const std::vector<double> x = apply_view(batch[i], v);
      return kl_div(soft_targets(teacher, x, tau), soft_targets(student, x, tau));
    };
    sum += weights[i].w * term(ModalityView::kMulti) +
           weights[i].w_v * term(ModalityView::kImageOnly) +
           weights[i].w_t * term(ModalityView::kTextOnly);
  }
  return tau * tau * (sum / static_cast<double>(batch.size()));
}

/// lambda * ce + (1 - lambda) * distill.
inline double student_loss(double ce, double distill, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ParamError("lambda must be in [0,1]");
  return lambda * ce + (1.0 - lambda) * distill;
}

// ---------------------------------------------------------------------------
// Prepared samples: view inputs and frozen-teacher targets, computed once
// ---------------------------------------------------------------------------

/// Everything a training step needs for one sample. Teacher predictions are
/// precomputed per view at the distillation temperature and at temperature 1
/// (the latter feed the correctness weighting and diagnostics); they never
/// change while the teacher is frozen.
struct PreparedSample {
  std::vector<double> input_multi, input_image, input_text;
  OneHotLabel label;
  double dominance = 0.0;
  bool has_teacher = false;
  SoftPrediction t_multi_tau, t_image_tau, t_text_tau;
  SoftPrediction t_multi_1, t_image_1, t_text_1;

  const std::vector<double>& input(ModalityView v) const {
    switch (v) {
      case ModalityView::kMulti: return input_multi;
      case ModalityView::kImageOnly: return input_image;
      default: return input_text;
    }
  }
};

inline PreparedSample prepare_sample(const MultimodalSample& s, const DenseNet* teacher,
                                     double tau) {
  PreparedSample p;
  p.input_multi = apply_view(s, ModalityView::kMulti);
  p.input_image = apply_view(s, ModalityView::kImageOnly);
  p.input_text = apply_view(s, ModalityView::kTextOnly);
  p.label = s.label;
  p.dominance = s.dominance;
  if (teacher != nullptr) {
    p.has_teacher = true;
    const auto both = [&](const std::vector<double>& x, SoftPrediction& at_tau,
                          SoftPrediction& at_one) {
      const std::vector<double> logits = forward(*teacher, x);
      at_tau = softmax_temp(logits, tau);
      at_one = softmax_temp(logits, 1.0);
    };
    both(p.input_multi, p.t_multi_tau, p.t_multi_1);
    both(p.input_image, p.t_image_tau, p.t_image_1);
    both(p.input_text, p.t_text_tau, p.t_text_1);
  }
  return p;
}

inline std::vector<PreparedSample> prepare_samples(const std::vector<MultimodalSample>& data,
                                                   std::span<const int> indices,
                                                   const DenseNet* teacher, double tau) {
  std::vector<PreparedSample> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(prepare_sample(data[i], teacher, tau));
  return out;
}

// ---------------------------------------------------------------------------
// Shared per-sample gradient machinery
// ---------------------------------------------------------------------------

/// Unscaled per-term losses and gradients for one sample: hard CE on the
/// multi view plus the three tempered-KL view terms. All training paths
/// combine these with the same routine, so structurally equal methods
/// (kd == msd(1,0,0), meta with frozen uniform weights == population 0.5)
/// produce bit-identical trajectories.
struct SampleTermCache {
  double ce_loss = 0.0;
  std::vector<double> ce_grad;
  double view_loss[3] = {0.0, 0.0, 0.0};       // multi, image, text
  std::vector<double> view_grad[3];
};

/// Coefficients for [CE, KL multi, KL image, KL text] under the student
/// objective lambda * CE + (1-lambda) * weighted distillation.
inline std::array<double, 4> term_coefficients(double lambda, const ModalityWeights& mw,
                                               bool distill) {
  if (!distill) return {1.0, 0.0, 0.0, 0.0};
  const double d = 1.0 - lambda;
  return {lambda, d * mw.w, d * mw.w_v, d * mw.w_t};
}

/// Per-sample loss/grad of the student objective; optionally fills `cache`
/// with the unscaled per-term pieces for later recombination.
inline LossGrad student_sample_grad(const DenseNet& student, const PreparedSample& s,
                                    const ModalityWeights& mw, double lambda, double tau,
                                    bool distill, SampleTermCache* cache = nullptr) {
  const std::array<double, 4> coeff = term_coefficients(lambda, mw, distill);
  LossGrad out;
  out.grad.assign(student.param_count(), 0.0);

  const bool need_ce = coeff[0] != 0.0 || cache != nullptr;
  if (need_ce) {
    const LossGrad ce = term_loss_grad(student, ce_term(s.input_multi, s.label));
    if (coeff[0] != 0.0) {
      out.loss += coeff[0] * ce.loss;
      axpy(coeff[0], ce.grad, out.grad);
    }
    if (cache != nullptr) {
      cache->ce_loss = ce.loss;
      cache->ce_grad = ce.grad;
    }
  }
  const SoftPrediction* targets[3] = {&s.t_multi_tau, &s.t_image_tau, &s.t_text_tau};
  const std::vector<double>* inputs[3] = {&s.input_multi, &s.input_image, &s.input_text};
  for (int v = 0; v < 3; ++v) {
    const double c = coeff[v + 1];
    if (c == 0.0 && cache == nullptr) continue;
    if (!s.has_teacher) {
      if (c != 0.0) throw ParamError("distillation term active but no teacher targets prepared");
      continue;
    }
    const LossGrad kl = term_loss_grad(student, kl_term(*inputs[v], targets[v]->probs, tau));
    if (c != 0.0) {
      out.loss += c * kl.loss;
      axpy(c, kl.grad, out.grad);
    }
    if (cache != nullptr) {
      cache->view_loss[v] = kl.loss;
      cache->view_grad[v] = kl.grad;
    }
  }
  return out;
}

/// Recombines cached per-term gradients under new coefficients. Matches
/// student_sample_grad exactly (same pieces, same order).
inline LossGrad recombine_sample_grad(const SampleTermCache& cache, const ModalityWeights& mw,
                                      double lambda, bool distill, std::size_t param_count) {
  const std::array<double, 4> coeff = term_coefficients(lambda, mw, distill);
  LossGrad out;
  out.grad.assign(param_count, 0.0);
  if (coeff[0] != 0.0) {
    out.loss += coeff[0] * cache.ce_loss;
    axpy(coeff[0], cache.ce_grad, out.grad);
  }
  for (int v = 0; v < 3; ++v) {
    if (coeff[v + 1] == 0.0) continue;
    out.loss += coeff[v + 1] * cache.view_loss[v];
    axpy(coeff[v + 1], cache.view_grad[v], out.grad);
  }
  return out;
}

/// Mean student loss/grad over a batch, fixed sample order.
inline LossGrad student_batch_grad(const DenseNet& student,
                                   std::span<const PreparedSample* const> batch,
                                   std::span<const ModalityWeights> weights, double lambda,
                                   double tau, bool distill,
                                   std::vector<SampleTermCache>* caches = nullptr) {
  if (batch.empty()) throw ParamError("empty batch");
  if (batch.size() != weights.size()) throw ShapeError("one weight triple per sample required");
  if (caches != nullptr) caches->assign(batch.size(), {});
  LossGrad out;
  out.grad.assign(student.param_count(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    SampleTermCache* cache = caches != nullptr ? &(*caches)[i] : nullptr;
    const LossGrad g = student_sample_grad(student, *batch[i], weights[i], lambda, tau, distill,
                                           cache);
    out.loss += g.loss;
    axpy(1.0, g.grad, out.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

}  // namespace msd
