// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "msd/net.hpp"
#include "msd/prob.hpp"
#include "msd/rng.hpp"

namespace testutil {

/// Relative gap with a floor on the denominator so finite-difference
/// roundoff on near-zero components does not register as error.
inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central finite differences of f over a flat parameter vector.
inline std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                               std::vector<double> params, double h = 1e-5) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = f(params);
    params[i] = saved - h;
    const double down = f(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// Max relative error between an analytic gradient and central differences
/// of `loss` around the network's current parameters.
inline double max_grad_gap(const msd::DenseNet& net,
                           const std::function<double(const msd::DenseNet&)>& loss,
                           std::span<const double> analytic, double h = 1e-5,
                           double floor = 1e-4) {
  msd::DenseNet probe = net;
  const auto f = [&](std::span<const double> p) {
    msd::set_params(probe, p);
    return loss(probe);
  };
  const std::vector<double> fd = central_differences(f, msd::flatten_params(net), h);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], fd[i], floor));
  return worst;
}

// ---------------------------------------------------------------------------
// Independent scalar reference network (nested-vector layout, index loops).
// Deliberately shares no code with the library implementation.
// ---------------------------------------------------------------------------

struct ScalarNet {
  // weights[l][out][in], biases[l][out]; hidden tanh or relu, linear output
  std::vector<std::vector<std::vector<double>>> weights;
  std::vector<std::vector<double>> biases;
  bool relu = true;
};

inline ScalarNet scalar_net_from(const msd::DenseNet& net) {
  ScalarNet s;
  s.relu = net.activation == msd::Activation::kRelu;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const int rows = net.layer_dims[l + 1], cols = net.layer_dims[l];
    std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w[r][c] = net.weights[l][static_cast<std::size_t>(r) * cols + c];
    s.weights.push_back(w);
    s.biases.push_back(net.biases[l]);
  }
  return s;
}

inline std::vector<double> scalar_forward(const ScalarNet& net, const std::vector<double>& input) {
  std::vector<double> a = input;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    std::vector<double> z(net.weights[l].size());
    for (std::size_t r = 0; r < net.weights[l].size(); ++r) {
      double acc = net.biases[l][r];
      for (std::size_t c = 0; c < net.weights[l][r].size(); ++c) acc += net.weights[l][r][c] * a[c];
      z[r] = acc;
    }
    if (l + 1 < net.weights.size())
      for (double& v : z) v = net.relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    a = std::move(z);
  }
  return a;
}

inline std::vector<double> scalar_softmax(const std::vector<double>& logits, double tau) {
  double m = logits[0] / tau;
  for (double z : logits) m = std::max(m, z / tau);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] / tau - m);
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> random_distribution(msd::Rng& rng, int n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& v : p) {
    v = rng.uniform(0.05, 1.0);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace testutil
