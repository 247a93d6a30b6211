// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msd/errors.hpp"
#include "msd/losses.hpp"
#include "msd/net.hpp"
#include "msd/prob.hpp"

namespace msd {

// ---------------------------------------------------------------------------
// Population weighting
// ---------------------------------------------------------------------------

inline ModalityWeights population_weights(double w, double w_v, double w_t) {
  for (double c : {w, w_v, w_t})
    if (c < 0.0 || c > 1.0) throw ParamError("population weights must be in [0,1]");
  return ModalityWeights{w, w_v, w_t};
}

// ---------------------------------------------------------------------------
// Instance-wise weighting
// ---------------------------------------------------------------------------

/// KL shift in the teacher's output when one modality is dropped. Dropping
/// text leaves the image-only input, so text importance compares the multi
/// and image-only predictions (and vice versa).
struct ImportanceScores {
  double text = 0.0;
  double image = 0.0;
};

inline ImportanceScores importance_scores(const SoftPrediction& t_multi,
                                          const SoftPrediction& t_image,
                                          const SoftPrediction& t_text) {
  return ImportanceScores{kl_div(t_multi, t_image), kl_div(t_multi, t_text)};
}

/// Importance-based weights: w = 1, w_v = tanh(I_text), w_t = tanh(I_image).
/// The cross-assignment (image-term weight driven by text importance) is
/// deliberate and kept as such.
inline ModalityWeights importance_weights(const SoftPrediction& t_multi,
                                          const SoftPrediction& t_image,
                                          const SoftPrediction& t_text) {
  const ImportanceScores s = importance_scores(t_multi, t_image, t_text);
  return ModalityWeights{1.0, std::tanh(s.text), std::tanh(s.image)};
}

/// Floor on the per-view cross-entropy before inversion; keeps perfectly
/// predicted samples from collapsing the normalization.
inline constexpr double kCorrectnessEps = 1e-6;

/// Correctness-based weights: inversely proportional to the teacher's
/// per-view cross-entropy against the true label, normalized to sum to 1.
inline ModalityWeights correctness_weights(const SoftPrediction& t_multi,
                                           const SoftPrediction& t_image,
                                           const SoftPrediction& t_text, const OneHotLabel& y) {
  const double h_multi = std::max(cross_entropy(t_multi, y), kCorrectnessEps);
  const double h_image = std::max(cross_entropy(t_image, y), kCorrectnessEps);
  const double h_text = std::max(cross_entropy(t_text, y), kCorrectnessEps);
  const double a = 1.0 / h_multi, b = 1.0 / h_image, c = 1.0 / h_text;
  const double norm = a + b + c;
  return ModalityWeights{a / norm, b / norm, c / norm};
}

// ---------------------------------------------------------------------------
// Learned weighting (meta-net)
// ---------------------------------------------------------------------------

/// Small MLP mapping the teacher's three predictions (concatenated, length
/// 3C) to a weight triple through an elementwise sigmoid, so outputs live in
/// (0,1)^3.
struct MetaNet {
  DenseNet body;

  std::size_t param_count() const { return body.param_count(); }
  int num_classes() const { return body.input_dim() / 3; }
};

/// Hidden layer gets the usual uniform init; the output layer starts at zero
/// so the initial weights are exactly (0.5, 0.5, 0.5) for every input.
inline MetaNet make_meta_net(int num_classes, int hidden, Rng& rng) {
  if (num_classes < 2) throw ParamError("meta-net needs at least 2 classes");
  if (hidden <= 0) throw ParamError("meta-net hidden width must be positive");
  MetaNet meta;
  meta.body = make_dense_net({3 * num_classes, hidden, 3}, Activation::kTanh, rng);
  std::fill(meta.body.weights.back().begin(), meta.body.weights.back().end(), 0.0);
  std::fill(meta.body.biases.back().begin(), meta.body.biases.back().end(), 0.0);
  return meta;
}

inline std::vector<double> meta_input(const SoftPrediction& t_multi, const SoftPrediction& t_image,
                                      const SoftPrediction& t_text) {
  std::vector<double> x;
  x.reserve(t_multi.probs.size() + t_image.probs.size() + t_text.probs.size());
  x.insert(x.end(), t_multi.probs.begin(), t_multi.probs.end());
  x.insert(x.end(), t_image.probs.begin(), t_image.probs.end());
  x.insert(x.end(), t_text.probs.begin(), t_text.probs.end());
  return x;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline ModalityWeights meta_forward_input(const MetaNet& meta, std::span<const double> input) {
  const std::vector<double> z = forward(meta.body, input);
  if (z.size() != 3) throw ShapeError("meta-net must have exactly 3 outputs");
  return ModalityWeights{sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])};
}

inline ModalityWeights meta_forward(const MetaNet& meta, const SoftPrediction& t_multi,
                                    const SoftPrediction& t_image, const SoftPrediction& t_text) {
  return meta_forward_input(meta, meta_input(t_multi, t_image, t_text));
}

/// Jacobian of the three sigmoid outputs w.r.t. all meta-net parameters;
/// rows [w, w_v, w_t], flat parameter order.
inline std::array<std::vector<double>, 3> meta_backward(const MetaNet& meta,
                                                        std::span<const double> input) {
  detail::ForwardTape tape;
  detail::forward_tape(meta.body, input, tape);
  const std::vector<double>& z = tape.post.back();
  if (z.size() != 3) throw ShapeError("meta-net must have exactly 3 outputs");
  std::array<std::vector<double>, 3> rows;
  for (int k = 0; k < 3; ++k) {
    rows[k].assign(meta.body.param_count(), 0.0);
    const double s = sigmoid(z[k]);
    std::vector<double> delta(3, 0.0);
    delta[k] = s * (1.0 - s);
    detail::backprop(meta.body, tape, std::move(delta), rows[k]);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Grid search over population weights
// ---------------------------------------------------------------------------

struct PopulationGrid {
  std::vector<double> w;
  std::vector<double> w_v;
  std::vector<double> w_t;
};

inline void validate(const PopulationGrid& grid) {
  if (grid.w.empty() || grid.w_v.empty() || grid.w_t.empty())
    throw ParamError("population grid axes must be nonempty");
  for (const std::vector<double>* axis : {&grid.w, &grid.w_v, &grid.w_t})
    for (double c : *axis)
      if (c < 0.0 || c > 1.0) throw ParamError("population grid values must be in [0,1]");
}

struct GridCellResult {
  double w = 0.0, w_v = 0.0, w_t = 0.0;
  double metric = 0.0;   // validation accuracy; NaN when the cell failed
  std::string error;     // empty on success
};

struct GridSearchResult {
  std::array<double, 3> best{};
  double best_metric = 0.0;
  std::vector<GridCellResult> table;  // lexicographic cell order
};

/// Runs `train_and_eval` for every cell (lexicographic order over w, w_v,
/// w_t) and returns the argmax cell; ties break toward the lexicographically
/// smallest triple. Cell failures are recorded and skipped. `jobs` > 1 runs
/// cells concurrently; results are still selected in deterministic order.
GridSearchResult grid_search_population(
    const PopulationGrid& grid,
    const std::function<double(double, double, double)>& train_and_eval, int jobs = 1);

}  // namespace msd

#include "msd/weighting_impl.hpp"
