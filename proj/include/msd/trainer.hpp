// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msd/config.hpp"
#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/losses.hpp"
#include "msd/meta_opt.hpp"
#include "msd/metrics.hpp"
#include "msd/net.hpp"
#include "msd/rng.hpp"
#include "msd/weighting.hpp"

namespace msd {

namespace detail {

inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace detail

struct TeacherResult {
  DenseNet teacher;  // best meta-split accuracy checkpoint
  DenseNet final_teacher;
  double best_val_acc = 0.0;
  double final_val_acc = 0.0;
};

/// Trains the teacher on hard labels with AdamW under the linear
/// warmup/decay schedule. Each sample is presented under a random view
/// (multi / image-only / text-only, one third each, redrawn every epoch), so
/// the frozen teacher ends up with meaningful single-modality predictions
/// for the distillation paths to match.
inline TeacherResult train_teacher(const std::vector<MultimodalSample>& data,
                                   const std::vector<int>& hidden,
                                   const TeacherTrainConfig& cfg) {
  const std::vector<int> train_idx = split_indices(data, Split::kTrain);
  if (train_idx.empty()) throw ParamError("train split is empty");
  const int C = data.front().label.num_classes;
  const int D = view_input_dim(static_cast<int>(data.front().text_feats.size()),
                               static_cast<int>(data.front().image_feats.size()));
  std::vector<int> dims{D};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(C);

  Rng init_rng(derive_seed(cfg.seed, "teacher_init"));
  DenseNet net = make_dense_net(dims, Activation::kRelu, init_rng);
  Rng loop_rng(derive_seed(cfg.seed, "teacher_loop"));

  const std::vector<int> meta_idx = split_indices(data, Split::kMeta);
  std::vector<PreparedSample> val_set = prepare_samples(data, meta_idx, nullptr, 1.0);

  AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamWState state;
  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_idx.size()) + cfg.batch - 1) / cfg.batch;
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  TeacherResult result;
  result.best_val_acc = -1.0;
  std::vector<int> order = train_idx;
  std::int64_t step = 0;
  static constexpr ModalityView kViews[3] = {ModalityView::kMulti, ModalityView::kImageOnly,
                                             ModalityView::kTextOnly};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, loop_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<SampleLoss> batch;
      batch.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const MultimodalSample& s = data[order[k]];
        const ModalityView view = kViews[loop_rng.below(3)];
        SampleLoss sl;
        sl.terms.push_back(ce_term(apply_view(s, view), s.label));
        sl.coeffs.push_back(1.0);
        batch.push_back(std::move(sl));
      }
      const LossGrad g = batch_loss_grad(net, batch);
      if (!std::isfinite(g.loss)) throw NumericError("teacher loss diverged at step " + std::to_string(step));
      adamw_step(net, g.grad, state, opt, warmup_linear_scale(step, total_steps, cfg.warmup_frac));
      ++step;
    }
    if (!val_set.empty()) {
      const double acc = accuracy_on(net, val_set);
      if (acc > result.best_val_acc) {
        result.best_val_acc = acc;
        result.teacher = net;
      }
      result.final_val_acc = acc;
    }
  }
  if (val_set.empty()) result.teacher = net;
  result.final_teacher = net;
  return result;
}

// ---------------------------------------------------------------------------
// Student training
// ---------------------------------------------------------------------------

struct StudentRunResult {
  DenseNet student;       // best meta-split accuracy checkpoint
  DenseNet final_student;
  std::optional<MetaNet> meta;
  std::vector<TraceRow> trace;
  double best_val_acc = 0.0;
  double final_val_acc = 0.0;
};

/// Per-sample weight triples for a method. Importance and correctness
/// weights are pure functions of the frozen teacher's predictions (and the
/// label), so they are computed once per dataset.
inline std::vector<ModalityWeights> scheme_weights(Method method,
                                                   const std::vector<PreparedSample>& train,
                                                   const WeightingConfig& wcfg) {
  std::vector<ModalityWeights> out(train.size());
  switch (method) {
    case Method::kSmall:
      break;  // unused
    case Method::kKd:
      std::fill(out.begin(), out.end(), ModalityWeights{1.0, 0.0, 0.0});
      break;
    case Method::kMsdPopulation:
      std::fill(out.begin(), out.end(),
                population_weights(wcfg.population_w, wcfg.population_w_v, wcfg.population_w_t));
      break;
    case Method::kMsdImportance:
      for (std::size_t i = 0; i < train.size(); ++i)
        out[i] = importance_weights(train[i].t_multi_tau, train[i].t_image_tau,
                                    train[i].t_text_tau);
      break;
    case Method::kMsdCorrectness:
      for (std::size_t i = 0; i < train.size(); ++i)
        out[i] = correctness_weights(train[i].t_multi_1, train[i].t_image_1, train[i].t_text_1,
                                     train[i].label);
      break;
    default:
      throw ParamError("meta weights are produced by the meta loop, not a fixed scheme");
  }
  return out;
}

/// Trains one student. All methods share the gradient machinery, the batch
/// stream and the student init stream, so structural identities between
/// methods hold bit-exactly under a shared seed. The distillation methods
/// differ only in where their weight triples come from; `small` trains on
/// hard labels alone.
inline StudentRunResult train_student(Method method, const std::vector<MultimodalSample>& data,
                                      const DenseNet* teacher, const RunConfig& cfg,
                                      std::uint64_t seed) {
  if (method != Method::kSmall && teacher == nullptr)
    throw ParamError("method " + method_name(method) + " requires a teacher");
  const std::vector<int> train_idx = split_indices(data, Split::kTrain);
  const std::vector<int> meta_idx = split_indices(data, Split::kMeta);
  const std::vector<int> test_idx = split_indices(data, Split::kTest);
  if (train_idx.empty()) throw ParamError("train split is empty");
  if (meta_idx.empty()) throw ParamError("meta split is empty");

  const double tau = cfg.distill.tau;
  const double lambda = cfg.distill.lambda;
  const DenseNet* prep_teacher = method == Method::kSmall ? nullptr : teacher;
  const std::vector<PreparedSample> train_set = prepare_samples(data, train_idx, prep_teacher, tau);
  const std::vector<PreparedSample> val_set = prepare_samples(data, meta_idx, nullptr, tau);
  const std::vector<PreparedSample> test_set = prepare_samples(data, test_idx, nullptr, tau);

  const int C = data.front().label.num_classes;
  const int D = static_cast<int>(train_set.front().input_multi.size());
  std::vector<int> dims{D};
  dims.insert(dims.end(), cfg.student_arch.begin(), cfg.student_arch.end());
  dims.push_back(C);
  Rng init_rng(derive_seed(seed, "student_init"));
  DenseNet student = make_dense_net(dims, Activation::kRelu, init_rng);

  StudentRunResult result;
  result.best_val_acc = -1.0;
  const auto consider = [&](const DenseNet& net) {
    const double val = accuracy_on(net, val_set);
    if (val > result.best_val_acc) {
      result.best_val_acc = val;
      result.student = net;
    }
    result.final_val_acc = val;
  };

  if (method == Method::kMsdMeta) {
    Rng meta_rng(derive_seed(seed, "metanet_init"));
    MetaNet meta_net = make_meta_net(C, cfg.meta.meta_hidden, meta_rng);
    MetaRunResult run = run_meta_training(
        cfg.meta, train_set, val_set, std::move(student), std::move(meta_net), seed, lambda, tau,
        cfg.eval_interval, [&](const DenseNet& net) { return accuracy_on(net, test_set); },
        [&](std::int64_t, const DenseNet& net) { consider(net); });
    result.final_student = std::move(run.student);
    result.meta = std::move(run.meta);
    result.trace = std::move(run.trace);
    if (result.best_val_acc < 0.0) consider(result.final_student);
    return result;
  }

  const bool distill = method != Method::kSmall;
  const std::vector<ModalityWeights> weights = scheme_weights(method, train_set, cfg.weighting);

  BatchSampler sampler(derive_seed(seed, "train_batches"), static_cast<int>(train_set.size()));
  AdamWConfig opt{cfg.train.lr, 0.9, 0.999, 1e-8, cfg.train.weight_decay};
  AdamWState state;
  result.trace.reserve(cfg.train.max_iters);
  for (std::int64_t it = 0; it < cfg.train.max_iters; ++it) {
    const std::vector<int> idx = sampler.draw(cfg.train.batch);
    std::vector<const PreparedSample*> batch;
    std::vector<ModalityWeights> batch_weights;
    batch.reserve(idx.size());
    batch_weights.reserve(idx.size());
    for (int i : idx) {
      batch.push_back(&train_set[i]);
      batch_weights.push_back(distill ? weights[i] : ModalityWeights{});
    }
    LossGrad g;
    try {
      g = student_batch_grad(student, batch, batch_weights, lambda, tau, distill);
      if (cfg.train.optimizer == StudentTrainConfig::Optimizer::kAdamW)
        adamw_step(student, g.grad, state, opt,
                   warmup_linear_scale(it, cfg.train.max_iters, cfg.train.warmup_frac));
      else
        sgd_step(student, g.grad, cfg.train.sgd_lr);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    TraceRow row;
    row.iteration = it;
    row.student_loss = g.loss;
    if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.train.max_iters) {
      row.test_acc = accuracy_on(student, test_set);
      consider(student);
    }
    result.trace.push_back(row);
  }
  result.final_student = student;
  if (result.best_val_acc < 0.0) consider(student);
  return result;
}

/// Trains small / kd / msd-meta students at several depths. The student's
/// hidden stack is the first configured width repeated `depth` times.
struct SizeSweepRow {
  int depth = 0;
  Method method = Method::kSmall;
  Metrics metrics;
};

inline std::vector<SizeSweepRow> size_sweep(const std::vector<int>& depths,
                                            const std::vector<MultimodalSample>& data,
                                            const DenseNet& teacher, const RunConfig& base,
                                            std::uint64_t seed) {
  std::vector<SizeSweepRow> rows;
  for (int depth : depths) {
    if (depth <= 0) throw ParamError("student depth must be positive");
    RunConfig cfg = base;
    cfg.student_arch.assign(depth, base.student_arch.front());
    for (Method m : {Method::kSmall, Method::kKd, Method::kMsdMeta}) {
      const StudentRunResult run = train_student(m, data, &teacher, cfg, seed);
      rows.push_back(SizeSweepRow{depth, m, evaluate_model(run.student, data, Split::kTest)});
    }
  }
  return rows;
}

}  // namespace msd
