// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "msd/errors.hpp"
#include "msd/losses.hpp"
#include "msd/net.hpp"
#include "msd/rng.hpp"
#include "msd/weighting.hpp"

namespace msd {

struct MetaOptConfig {
  double alpha = 0.05;            // student (inner) learning rate
  double beta = 1e-3;             // meta learning rate
  int train_batch = 32;           // n
  int meta_batch = 32;            // m
  std::int64_t max_iters = 3000;  // T
  int meta_hidden = 64;
};

inline void validate(const MetaOptConfig& cfg) {
  if (cfg.alpha <= 0.0) throw ParamError("alpha must be positive");
  if (cfg.beta < 0.0) throw ParamError("beta must be nonnegative");
  if (cfg.train_batch <= 0 || cfg.meta_batch <= 0) throw ParamError("batch sizes must be positive");
  if (cfg.max_iters < 0) throw ParamError("max_iters must be nonnegative");
  if (cfg.meta_hidden <= 0) throw ParamError("meta_hidden must be positive");
}

/// Uniform-with-replacement minibatch index sampler on its own stream.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, int population) : rng_(seed), population_(population) {}

  std::vector<int> draw(int batch) {
    std::vector<int> idx(batch);
    for (int& i : idx) i = static_cast<int>(rng_.below(population_));
    return idx;
  }

 private:
  Rng rng_;
  int population_;
};

/// Result of the one-step look-ahead: the virtual student plus everything the
/// meta-gradient needs, cached per train sample.
struct VirtualStepResult {
  DenseNet virtual_student;
  double train_loss = 0.0;                    // mean student loss on the batch
  double lambda = 0.0;
  double alpha = 0.0;
  std::vector<SampleTermCache> caches;        // unscaled per-term grads at w
  std::vector<ModalityWeights> weights;       // meta weights at current theta
  std::vector<std::vector<double>> meta_inputs;
};

/// One SGD look-ahead step on the student objective with weights produced by
/// the meta-net at its current parameters. Caches per-sample, per-view
/// gradient pieces for the meta-gradient.
inline VirtualStepResult virtual_step(const DenseNet& student, const MetaNet& meta,
                                      std::span<const PreparedSample* const> batch, double alpha,
                                      double lambda, double tau) {
  if (batch.empty()) throw ParamError("empty train batch");
  VirtualStepResult r;
  r.lambda = lambda;
  r.alpha = alpha;
  r.weights.reserve(batch.size());
  r.meta_inputs.reserve(batch.size());
  for (const PreparedSample* s : batch) {
    if (!s->has_teacher) throw ParamError("meta training requires teacher targets");
    std::vector<double> in = meta_input(s->t_multi_tau, s->t_image_tau, s->t_text_tau);
    r.weights.push_back(meta_forward_input(meta, in));
    r.meta_inputs.push_back(std::move(in));
  }
  const LossGrad g =
      student_batch_grad(student, batch, r.weights, lambda, tau, /*distill=*/true, &r.caches);
  r.train_loss = g.loss;
  r.virtual_student = student;
  sgd_step(r.virtual_student, g.grad, alpha);
  return r;
}

/// Exact meta-gradient through the virtual step. The weight triples enter the
/// student loss linearly, so with G the mean CE gradient on the meta batch at
/// the virtual parameters:
///   d L_meta / d theta = -alpha (1-lambda)/n *
///       sum_{i,view} (g_{i,view} . G) * d weight_{i,view} / d theta.
/// The hard-CE part of the student loss does not depend on theta and drops.
inline std::vector<double> compute_meta_gradient(const VirtualStepResult& vs, const MetaNet& meta,
                                                 std::span<const PreparedSample* const> meta_batch,
                                                 double* meta_loss_out = nullptr) {
  if (meta_batch.empty()) throw ParamError("empty meta batch");
  if (vs.caches.size() != vs.meta_inputs.size())
    throw NumericError("virtual step cache is inconsistent");
  std::vector<double> grad(meta.param_count(), 0.0);

  // Mean hard-CE loss/gradient on the meta batch, multi view, temperature 1.
  double meta_loss = 0.0;
  std::vector<double> G(vs.virtual_student.param_count(), 0.0);
  for (const PreparedSample* s : meta_batch) {
    const LossGrad ce = term_loss_grad(vs.virtual_student, ce_term(s->input_multi, s->label));
    meta_loss += ce.loss;
    axpy(1.0, ce.grad, G);
  }
  const double inv_m = 1.0 / static_cast<double>(meta_batch.size());
  meta_loss *= inv_m;
  for (double& g : G) g *= inv_m;
  if (meta_loss_out != nullptr) *meta_loss_out = meta_loss;

  if (vs.lambda == 1.0) return grad;  // weights never reach the student loss

  const double scale =
      -vs.alpha * (1.0 - vs.lambda) / static_cast<double>(vs.caches.size());
  for (std::size_t i = 0; i < vs.caches.size(); ++i) {
    const SampleTermCache& cache = vs.caches[i];
    double dots[3];
    for (int v = 0; v < 3; ++v) {
      double d = 0.0;
      const std::vector<double>& gv = cache.view_grad[v];
      for (std::size_t p = 0; p < gv.size(); ++p) d += gv[p] * G[p];
      dots[v] = d;
    }
    const std::array<std::vector<double>, 3> jac = meta_backward(meta, vs.meta_inputs[i]);
    for (int v = 0; v < 3; ++v) axpy(scale * dots[v], jac[v], grad);
  }
  return grad;
}

inline void meta_update(MetaNet& meta, std::span<const double> grad, double beta) {
  sgd_step(meta.body, grad, beta);
}

/// Real student step: same train batch, weights recomputed at the updated
/// meta parameters, gradient recombined from the cached per-term pieces
/// (the pieces were taken at w, which is what this step updates).
inline void student_update(DenseNet& student, const MetaNet& updated_meta,
                           const VirtualStepResult& vs) {
  std::vector<double> grad(student.param_count(), 0.0);
  for (std::size_t i = 0; i < vs.caches.size(); ++i) {
    const ModalityWeights mw = meta_forward_input(updated_meta, vs.meta_inputs[i]);
    const LossGrad g = recombine_sample_grad(vs.caches[i], mw, vs.lambda, /*distill=*/true,
                                             student.param_count());
    axpy(1.0, g.grad, grad);
  }
  const double inv = 1.0 / static_cast<double>(vs.caches.size());
  for (double& g : grad) g *= inv;
  sgd_step(student, grad, vs.alpha);
}

/// One trace record per iteration; optional fields are only present where
/// they apply (meta columns on meta runs, test accuracy on eval iterations).
struct TraceRow {
  std::int64_t iteration = 0;
  double student_loss = 0.0;
  std::optional<double> meta_loss;
  std::optional<double> meta_grad_norm;
  std::optional<double> test_acc;
};

struct MetaRunResult {
  DenseNet student;
  MetaNet meta;
  std::vector<TraceRow> trace;
};

/// Online bilevel loop: per iteration, sample a train and a meta batch, take
/// the virtual step, update the meta-net along the exact meta-gradient, then
/// update the real student at the new meta parameters.
/// `eval_fn` (if set) is called on eval iterations with the current student.
inline MetaRunResult run_meta_training(
    const MetaOptConfig& cfg, const std::vector<PreparedSample>& train,
    const std::vector<PreparedSample>& meta_set, DenseNet student, MetaNet meta,
    std::uint64_t seed, double lambda, double tau, int eval_interval = 0,
    const std::function<double(const DenseNet&)>& eval_fn = nullptr,
    const std::function<void(std::int64_t, const DenseNet&)>& checkpoint_fn = nullptr) {
  validate(cfg);
  if (meta_set.empty()) throw ParamError("meta split must be nonempty");
  if (train.empty()) throw ParamError("train split must be nonempty");

  BatchSampler train_sampler(derive_seed(seed, "train_batches"), static_cast<int>(train.size()));
  BatchSampler meta_sampler(derive_seed(seed, "meta_batches"), static_cast<int>(meta_set.size()));

  MetaRunResult out;
  out.trace.reserve(cfg.max_iters);
  for (std::int64_t it = 0; it < cfg.max_iters; ++it) {
    const std::vector<int> train_idx = train_sampler.draw(cfg.train_batch);
    const std::vector<int> meta_idx = meta_sampler.draw(cfg.meta_batch);
    std::vector<const PreparedSample*> train_batch, meta_batch;
    train_batch.reserve(train_idx.size());
    for (int i : train_idx) train_batch.push_back(&train[i]);
    meta_batch.reserve(meta_idx.size());
    for (int i : meta_idx) meta_batch.push_back(&meta_set[i]);

    VirtualStepResult vs;
    double meta_loss = 0.0;
    try {
      vs = virtual_step(student, meta, train_batch, cfg.alpha, lambda, tau);
      const std::vector<double> mg = compute_meta_gradient(vs, meta, meta_batch, &meta_loss);
      double norm2 = 0.0;
      for (double g : mg) norm2 += g * g;
      if (cfg.beta != 0.0) meta_update(meta, mg, cfg.beta);
      student_update(student, meta, vs);

      TraceRow row;
      row.iteration = it;
      row.student_loss = vs.train_loss;
      row.meta_loss = meta_loss;
      row.meta_grad_norm = std::sqrt(norm2);
      if (eval_interval > 0 && ((it + 1) % eval_interval == 0 || it + 1 == cfg.max_iters)) {
        if (eval_fn) row.test_acc = eval_fn(student);
        if (checkpoint_fn) checkpoint_fn(it, student);
      }
      out.trace.push_back(row);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  out.student = std::move(student);
  out.meta = std::move(meta);
  return out;
}

}  // namespace msd
