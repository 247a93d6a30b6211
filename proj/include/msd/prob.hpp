// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msd/errors.hpp"

namespace msd {

/// Probabilities are clamped to at least this before any log or division.
inline constexpr double kProbEps = 1e-12;

/// Probability vector over classes produced by a tempered softmax.
struct SoftPrediction {
  std::vector<double> probs;
  double temperature = 1.0;

  int num_classes() const { return static_cast<int>(probs.size()); }
};

/// Single-label target: exactly one class is hot.
struct OneHotLabel {
  int class_index = 0;
  int num_classes = 0;

  std::vector<double> as_vector() const {
    std::vector<double> v(num_classes, 0.0);
    v[class_index] = 1.0;
    return v;
  }
};

inline void check_label(const OneHotLabel& y) {
  if (y.num_classes < 2 || y.class_index < 0 || y.class_index >= y.num_classes)
    throw ParamError("label class index " + std::to_string(y.class_index) +
                     " out of range for " + std::to_string(y.num_classes) + " classes");
}

/// softmax(logits / tau), computed with max-subtraction.
inline SoftPrediction softmax_temp(std::span<const double> logits, double tau) {
  if (tau <= 0.0) throw ParamError("softmax temperature must be positive");
  if (logits.empty()) throw ShapeError("softmax of empty logits");
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit in softmax");
    max_scaled = std::max(max_scaled, z / tau);
  }
  SoftPrediction out;
  out.temperature = tau;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out.probs[j] = std::exp(logits[j] / tau - max_scaled);
    sum += out.probs[j];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

/// KL(p || q) in nats. Entries are clamped below by kProbEps before the logs,
/// so the result is finite for any pair of probability vectors.
inline double kl_div(const SoftPrediction& p, const SoftPrediction& q) {
  if (p.probs.size() != q.probs.size())
    throw ShapeError("kl_div length mismatch: " + std::to_string(p.probs.size()) +
                     " vs " + std::to_string(q.probs.size()));
  double sum = 0.0;
  for (std::size_t j = 0; j < p.probs.size(); ++j) {
    const double pj = std::max(p.probs[j], kProbEps);
    const double qj = std::max(q.probs[j], kProbEps);
    sum += pj * (std::log(pj) - std::log(qj));
  }
  return std::max(sum, 0.0);
}

/// -log p[y] in nats.
inline double cross_entropy(const SoftPrediction& p, const OneHotLabel& y) {
  check_label(y);
  if (y.num_classes != p.num_classes())
    throw ShapeError("cross_entropy: label classes do not match prediction length");
  return -std::log(std::max(p.probs[y.class_index], kProbEps));
}

/// Shannon entropy in nats (diagnostic).
inline double entropy(const SoftPrediction& p) {
  double h = 0.0;
  for (double pj : p.probs) {
    const double c = std::max(pj, kProbEps);
    h -= c * std::log(c);
  }
  return h;
}

}  // namespace msd
