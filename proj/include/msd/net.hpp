// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msd/errors.hpp"
#include "msd/prob.hpp"
#include "msd/rng.hpp"

namespace msd {

enum class Activation { kRelu, kTanh };

inline std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ParseError("unknown activation '" + name + "'");
}

/// Fully connected feedforward network. Hidden layers use the configured
/// nonlinearity, the output layer is always linear (logits). Weights are
/// stored row-major, out x in, per layer.
struct DenseNet {
  std::vector<int> layer_dims;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Activation activation = Activation::kRelu;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return weights.size(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
      n += static_cast<std::size_t>(layer_dims[l + 1]) * layer_dims[l] + layer_dims[l + 1];
    return n;
  }
};

inline void validate_net(const DenseNet& net) {
  if (net.layer_dims.size() < 2) throw ShapeError("network needs at least input and output dims");
  for (int d : net.layer_dims)
    if (d <= 0) throw ShapeError("layer dims must be positive");
  if (net.weights.size() != net.layer_dims.size() - 1 || net.biases.size() != net.weights.size())
    throw ShapeError("layer count does not match layer_dims");
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const std::size_t rows = net.layer_dims[l + 1], cols = net.layer_dims[l];
    if (net.weights[l].size() != rows * cols) throw ShapeError("weight matrix shape mismatch");
    if (net.biases[l].size() != rows) throw ShapeError("bias vector shape mismatch");
    for (double v : net.weights[l])
      if (!std::isfinite(v)) throw NumericError("non-finite weight");
    for (double v : net.biases[l])
      if (!std::isfinite(v)) throw NumericError("non-finite bias");
  }
}

/// Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases.
inline DenseNet make_dense_net(std::vector<int> dims, Activation act, Rng& rng) {
  DenseNet net;
  net.layer_dims = std::move(dims);
  net.activation = act;
  if (net.layer_dims.size() < 2) throw ShapeError("network needs at least input and output dims");
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const int fan_in = net.layer_dims[l], fan_out = net.layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
    for (double& v : w) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

namespace detail {

inline double apply_act(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

inline double act_grad(Activation a, double z, double activated) {
  if (a == Activation::kRelu) return z > 0.0 ? 1.0 : 0.0;
  return 1.0 - activated * activated;
}

/// Forward pass keeping pre-activations and activations per layer.
struct ForwardTape {
  std::vector<std::vector<double>> pre;   // z_l, one per layer
  std::vector<std::vector<double>> post;  // a_l, post[0] is the input copy
};

inline void forward_tape(const DenseNet& net, std::span<const double> input, ForwardTape& tape) {
  if (static_cast<int>(input.size()) != net.input_dim())
    throw ShapeError("input length " + std::to_string(input.size()) + " does not match network input dim " +
                     std::to_string(net.input_dim()));
  tape.pre.assign(net.num_layers(), {});
  tape.post.assign(net.num_layers() + 1, {});
  tape.post[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const int rows = net.layer_dims[l + 1], cols = net.layer_dims[l];
    const std::vector<double>& x = tape.post[l];
    std::vector<double>& z = tape.pre[l];
    z.assign(net.biases[l].begin(), net.biases[l].end());
    for (int r = 0; r < rows; ++r) {
      const double* wrow = net.weights[l].data() + static_cast<std::size_t>(r) * cols;
      double acc = z[r];
      for (int c = 0; c < cols; ++c) acc += wrow[c] * x[c];
      z[r] = acc;
    }
    const bool last = (l + 1 == net.num_layers());
    std::vector<double>& a = tape.post[l + 1];
    a.resize(rows);
    for (int r = 0; r < rows; ++r) a[r] = last ? z[r] : apply_act(net.activation, z[r]);
  }
}

}  // namespace detail

/// Raw logits for one input.
inline std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  detail::ForwardTape tape;
  detail::forward_tape(net, input, tape);
  return tape.post.back();
}

// ---------------------------------------------------------------------------
// Loss terms and exact gradients
// ---------------------------------------------------------------------------

/// One additive building block of a per-sample loss: hard-label cross-entropy
/// at temperature 1, or tau^2-scaled KL against a fixed target distribution
/// at temperature tau.
struct LossTerm {
  enum class Kind { kHardCE, kTemperedKL };
  Kind kind = Kind::kHardCE;
  std::vector<double> input;
  OneHotLabel label;           // kHardCE
  std::vector<double> target;  // kTemperedKL
  double tau = 1.0;
};

inline LossTerm ce_term(std::vector<double> input, OneHotLabel label) {
  LossTerm t;
  t.kind = LossTerm::Kind::kHardCE;
  t.input = std::move(input);
  t.label = label;
  return t;
}

inline LossTerm kl_term(std::vector<double> input, std::vector<double> target, double tau) {
  LossTerm t;
  t.kind = LossTerm::Kind::kTemperedKL;
  t.input = std::move(input);
  t.target = std::move(target);
  t.tau = tau;
  return t;
}

/// Per-sample loss: sum over coeffs[k] * terms[k]. Terms with coefficient
/// exactly zero are skipped, so they contribute neither work nor rounding.
struct SampleLoss {
  std::vector<LossTerm> terms;
  std::vector<double> coeffs;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat, layer order: W0, b0, W1, b1, ...
};

inline void axpy(double a, std::span<const double> x, std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

namespace detail {

inline void check_term(const DenseNet& net, const LossTerm& term) {
  if (static_cast<int>(term.input.size()) != net.input_dim())
    throw ShapeError("loss term input length does not match network input dim");
  if (term.kind == LossTerm::Kind::kHardCE) {
    check_label(term.label);
    if (term.label.num_classes != net.output_dim())
      throw ShapeError("label classes do not match network output dim");
  } else {
    if (static_cast<int>(term.target.size()) != net.output_dim())
      throw ShapeError("KL target length does not match network output dim");
    if (term.tau <= 0.0) throw ParamError("KL term temperature must be positive");
  }
}

/// Backpropagates an output-logit gradient seed through the tape.
inline void backprop(const DenseNet& net, const ForwardTape& tape, std::vector<double> delta,
                     std::vector<double>& grad) {
  std::size_t offset = grad.size();
  for (std::size_t li = net.num_layers(); li-- > 0;) {
    const int rows = net.layer_dims[li + 1], cols = net.layer_dims[li];
    offset -= static_cast<std::size_t>(rows) * cols + rows;
    double* gw = grad.data() + offset;
    double* gb = gw + static_cast<std::size_t>(rows) * cols;
    const std::vector<double>& x = tape.post[li];
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      double* grow = gw + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) grow[c] += d * x[c];
      gb[r] += d;
    }
    if (li == 0) break;
    std::vector<double> prev(cols, 0.0);
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      const double* wrow = net.weights[li].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) prev[c] += d * wrow[c];
    }
    for (int c = 0; c < cols; ++c)
      prev[c] *= act_grad(net.activation, tape.pre[li - 1][c], tape.post[li][c]);
    delta = std::move(prev);
  }
}

}  // namespace detail

/// Loss value and exact parameter gradient of one unscaled term.
inline LossGrad term_loss_grad(const DenseNet& net, const LossTerm& term) {
  detail::check_term(net, term);
  detail::ForwardTape tape;
  detail::forward_tape(net, term.input, tape);
  const std::vector<double>& logits = tape.post.back();
  const int C = net.output_dim();

  LossGrad out;
  out.grad.assign(net.param_count(), 0.0);
  std::vector<double> delta(C);
  if (term.kind == LossTerm::Kind::kHardCE) {
    const SoftPrediction p = softmax_temp(logits, 1.0);
    out.loss = -std::log(std::max(p.probs[term.label.class_index], kProbEps));
    for (int j = 0; j < C; ++j) delta[j] = p.probs[j];
    delta[term.label.class_index] -= 1.0;
  } else {
    const SoftPrediction q = softmax_temp(logits, term.tau);
    double kl = 0.0;
    for (int j = 0; j < C; ++j) {
      const double tj = std::max(term.target[j], kProbEps);
      const double qj = std::max(q.probs[j], kProbEps);
      kl += tj * (std::log(tj) - std::log(qj));
    }
    out.loss = term.tau * term.tau * kl;
    // d/dz of tau^2 * KL(t, softmax(z/tau)) is tau * (q - t)
    for (int j = 0; j < C; ++j) delta[j] = term.tau * (q.probs[j] - term.target[j]);
  }
  detail::backprop(net, tape, std::move(delta), out.grad);
  return out;
}

/// Loss only (no gradient); used by finite-difference oracles.
inline double term_loss(const DenseNet& net, const LossTerm& term) {
  detail::check_term(net, term);
  const std::vector<double> logits = forward(net, term.input);
  if (term.kind == LossTerm::Kind::kHardCE)
    return cross_entropy(softmax_temp(logits, 1.0), term.label);
  const SoftPrediction q = softmax_temp(logits, term.tau);
  SoftPrediction t{term.target, term.tau};
  return term.tau * term.tau * kl_div(t, q);
}

inline LossGrad sample_loss_grad(const DenseNet& net, const SampleLoss& sample) {
  if (sample.terms.size() != sample.coeffs.size())
    throw ShapeError("sample loss coeff count does not match term count");
  LossGrad out;
  out.grad.assign(net.param_count(), 0.0);
  for (std::size_t k = 0; k < sample.terms.size(); ++k) {
    if (sample.coeffs[k] == 0.0) continue;
    const LossGrad t = term_loss_grad(net, sample.terms[k]);
    out.loss += sample.coeffs[k] * t.loss;
    axpy(sample.coeffs[k], t.grad, out.grad);
  }
  return out;
}

inline double sample_loss(const DenseNet& net, const SampleLoss& sample) {
  double loss = 0.0;
  for (std::size_t k = 0; k < sample.terms.size(); ++k) {
    if (sample.coeffs[k] == 0.0) continue;
    loss += sample.coeffs[k] * term_loss(net, sample.terms[k]);
  }
  return loss;
}

/// Mean loss and gradient over a batch, accumulated in sample-index order.
inline LossGrad batch_loss_grad(const DenseNet& net, std::span<const SampleLoss> batch) {
  if (batch.empty()) throw ParamError("empty batch");
  LossGrad out;
  out.grad.assign(net.param_count(), 0.0);
  for (const SampleLoss& s : batch) {
    const LossGrad g = sample_loss_grad(net, s);
    out.loss += g.loss;
    axpy(1.0, g.grad, out.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

inline double batch_loss(const DenseNet& net, std::span<const SampleLoss> batch) {
  if (batch.empty()) throw ParamError("empty batch");
  double loss = 0.0;
  for (const SampleLoss& s : batch) loss += sample_loss(net, s);
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Parameter access and optimizers
// ---------------------------------------------------------------------------

inline std::vector<double> flatten_params(const DenseNet& net) {
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    flat.insert(flat.end(), net.weights[l].begin(), net.weights[l].end());
    flat.insert(flat.end(), net.biases[l].begin(), net.biases[l].end());
  }
  return flat;
}

inline void set_params(DenseNet& net, std::span<const double> flat) {
  if (flat.size() != net.param_count()) throw ShapeError("flat parameter vector length mismatch");
  std::size_t i = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double& w : net.weights[l]) w = flat[i++];
    for (double& b : net.biases[l]) b = flat[i++];
  }
}

inline void check_grad_finite(std::span<const double> grad) {
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
}

inline void sgd_step(DenseNet& net, std::span<const double> grad, double lr) {
  if (lr < 0.0) throw ParamError("learning rate must be nonnegative");
  if (grad.size() != net.param_count()) throw ShapeError("gradient length mismatch");
  check_grad_finite(grad);
  std::size_t i = 0;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double& w : net.weights[l]) w -= lr * grad[i++];
    for (double& b : net.biases[l]) b -= lr * grad[i++];
  }
}

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::vector<double> m, v;
  std::int64_t step = 0;
};

/// One AdamW step with decoupled weight decay. `lr_scale` multiplies the
/// configured rate, carrying the warmup/decay schedule.
inline void adamw_step(DenseNet& net, std::span<const double> grad, AdamWState& state,
                       const AdamWConfig& cfg, double lr_scale = 1.0) {
  const std::size_t n = net.param_count();
  if (grad.size() != n) throw ShapeError("gradient length mismatch");
  check_grad_finite(grad);
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double lr = cfg.lr * lr_scale;
  std::size_t i = 0;
  auto update = [&](double& w) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    w -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w);
    ++i;
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (double& w : net.weights[l]) update(w);
    for (double& b : net.biases[l]) update(b);
  }
}

/// Linear warmup over the first `warmup_frac` of steps, then linear decay to
/// zero at `total`. `step` is 0-based.
inline double warmup_linear_scale(std::int64_t step, std::int64_t total, double warmup_frac = 0.1) {
  if (total <= 0) return 1.0;
  const std::int64_t warmup = static_cast<std::int64_t>(warmup_frac * static_cast<double>(total));
  if (warmup > 0 && step < warmup)
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
  return static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace msd
