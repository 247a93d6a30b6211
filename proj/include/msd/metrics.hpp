// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "msd/data.hpp"
#include "msd/errors.hpp"
#include "msd/losses.hpp"
#include "msd/net.hpp"
#include "msd/prob.hpp"

namespace msd {

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // binary tasks only
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
};

/// Argmax with lowest-index tie-break.
inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(v.size()); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

/// Rank-based (Mann-Whitney) AUC for binary labels; tied score pairs count
/// one half. Exact on small sets, no ROC discretization.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores/labels length mismatch");
  if (scores.empty()) throw ParamError("auc of empty set");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  // Average ranks over tied score groups (1-based ranks).
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  std::int64_t n_pos = 0;
  double rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 1) {
      ++n_pos;
      rank_sum += rank[k];
    }
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ParamError("auc needs both classes present");
  const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Accuracy, optional AUC (binary only, from class-1 scores), macro-F1
/// (unweighted mean of per-class F1, zero when a class has neither
/// predictions nor positives) and micro-F1 (global counts; identical to
/// accuracy for single-label tasks).
inline Metrics compute_metrics(std::span<const int> predicted, std::span<const int> actual,
                               int num_classes, std::span<const double> class1_scores = {}) {
  if (predicted.size() != actual.size()) throw ShapeError("metrics: length mismatch");
  if (predicted.empty()) throw ParamError("metrics of empty set");
  Metrics m;
  std::int64_t correct = 0;
  std::vector<std::int64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == actual[i]) {
      ++correct;
      ++tp[predicted[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[actual[i]];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());

  double f1_sum = 0.0;
  std::int64_t tp_all = 0, fp_all = 0, fn_all = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  const double micro_denom = static_cast<double>(2 * tp_all + fp_all + fn_all);
  m.micro_f1 = micro_denom > 0.0 ? 2.0 * static_cast<double>(tp_all) / micro_denom : 0.0;

  if (num_classes == 2 && !class1_scores.empty()) {
    const bool both_present =
        std::find(actual.begin(), actual.end(), 0) != actual.end() &&
        std::find(actual.begin(), actual.end(), 1) != actual.end();
    if (both_present) {
      std::vector<int> labels(actual.begin(), actual.end());
      m.auc = binary_auc(class1_scores, labels);
    }
  }
  return m;
}

/// Evaluates a model on one split of the dataset under the given view.
inline Metrics evaluate_model(const DenseNet& model, const std::vector<MultimodalSample>& data,
                              Split split, ModalityView view = ModalityView::kMulti) {
  std::vector<int> predicted, actual;
  std::vector<double> scores;
  int num_classes = 0;
  for (const MultimodalSample& s : data) {
    if (s.split != split) continue;
    num_classes = s.label.num_classes;
    const SoftPrediction p = softmax_temp(forward(model, apply_view(s, view)), 1.0);
    predicted.push_back(argmax_lowest(p.probs));
    actual.push_back(s.label.class_index);
    if (num_classes == 2) scores.push_back(p.probs[1]);
  }
  if (predicted.empty()) throw ParamError("empty evaluation split");
  return compute_metrics(predicted, actual, num_classes, scores);
}

/// Plain accuracy on a prepared set (multi view); used inside training loops.
inline double accuracy_on(const DenseNet& model, const std::vector<PreparedSample>& set) {
  if (set.empty()) throw ParamError("empty evaluation set");
  std::int64_t correct = 0;
  for (const PreparedSample& s : set) {
    const std::vector<double> logits = forward(model, s.input_multi);
    if (argmax_lowest(logits) == s.label.class_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace msd
