// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "msd/checkpoint.hpp"
#include "msd/net.hpp"
#include "msd/prob.hpp"
#include "msd/rng.hpp"
#include "test_util.hpp"

using msd::Activation;
using msd::DenseNet;
using msd::LossGrad;
using msd::LossTerm;
using msd::OneHotLabel;
using msd::Rng;
using msd::SampleLoss;

namespace {

DenseNet zero_net(std::vector<int> dims, Activation act = Activation::kRelu) {
  DenseNet net;
  net.layer_dims = std::move(dims);
  net.activation = act;
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    net.weights.emplace_back(
        static_cast<std::size_t>(net.layer_dims[l + 1]) * net.layer_dims[l], 0.0);
    net.biases.emplace_back(net.layer_dims[l + 1], 0.0);
  }
  return net;
}

SampleLoss one_term(LossTerm term, double coeff = 1.0) {
  SampleLoss s;
  s.terms.push_back(std::move(term));
  s.coeffs.push_back(coeff);
  return s;
}

}  // namespace

TEST(Forward, ZeroParametersGiveZeroLogits) {
  const DenseNet net = zero_net({3, 4, 2});
  const std::vector<double> out = msd::forward(net, std::vector<double>{1.0, -2.0, 0.5});
  for (double z : out) EXPECT_DOUBLE_EQ(z, 0.0);
}

TEST(Forward, SingleAffineLayer) {
  DenseNet net = zero_net({1, 1});
  net.weights[0][0] = 2.0;
  net.biases[0][0] = 1.0;
  const std::vector<double> out = msd::forward(net, std::vector<double>{3.0});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0], 7.0);
}

TEST(Forward, MatchesScalarLoopOracle) {
  Rng rng(11);
  const DenseNet net = msd::make_dense_net({4, 2, 2}, Activation::kRelu, rng);
  const std::vector<double> input{0.3, -1.2, 0.7, 2.1};
  const std::vector<double> got = msd::forward(net, input);
  const std::vector<double> want = testutil::scalar_forward(testutil::scalar_net_from(net), input);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t j = 0; j < got.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
}

TEST(Forward, DimensionMismatch) {
  const DenseNet net = zero_net({3, 2});
  EXPECT_THROW(msd::forward(net, std::vector<double>{1.0, 2.0}), msd::ShapeError);
}

TEST(Backward, CrossEntropyMatchesFiniteDifferences) {
  // zero output layer on top of a random hidden layer
  Rng rng(5);
  DenseNet net = msd::make_dense_net({4, 3, 2}, Activation::kRelu, rng);
  std::fill(net.weights[1].begin(), net.weights[1].end(), 0.0);
  std::vector<SampleLoss> batch;
  Rng in_rng(17);
  for (int i = 0; i < 4; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = in_rng.uniform(-1.0, 1.0);
    batch.push_back(one_term(msd::ce_term(x, OneHotLabel{i % 2, 2})));
  }
  const LossGrad g = msd::batch_loss_grad(net, batch);
  const double gap = testutil::max_grad_gap(
      net, [&](const DenseNet& n) { return msd::batch_loss(n, batch); }, g.grad);
  EXPECT_LT(gap, 1e-5);
}

TEST(Backward, SelfTargetKlHasZeroGradient) {
  Rng rng(23);
  const DenseNet net = msd::make_dense_net({3, 4, 3}, Activation::kTanh, rng);
  const std::vector<double> x{0.5, -0.25, 1.5};
  const double tau = 2.0;
  const msd::SoftPrediction own = msd::softmax_temp(msd::forward(net, x), tau);
  const LossGrad g = msd::term_loss_grad(net, msd::kl_term(x, own.probs, tau));
  double norm = 0.0;
  for (double v : g.grad) norm += v * v;
  EXPECT_LE(std::sqrt(norm), 1e-8);
  EXPECT_NEAR(g.loss, 0.0, 1e-12);
}

TEST(Backward, ZeroCoefficientSkipsDistillTerms) {
  Rng rng(31);
  const DenseNet net = msd::make_dense_net({3, 3, 2}, Activation::kRelu, rng);
  const std::vector<double> x{1.0, 0.0, -1.0};
  SampleLoss with_dead_terms;
  with_dead_terms.terms.push_back(msd::ce_term(x, OneHotLabel{0, 2}));
  with_dead_terms.terms.push_back(msd::kl_term(x, {0.5, 0.5}, 4.0));
  with_dead_terms.coeffs = {0.5, 0.0};
  const LossGrad a = msd::sample_loss_grad(net, with_dead_terms);
  const LossGrad b = msd::sample_loss_grad(net, one_term(msd::ce_term(x, OneHotLabel{0, 2}), 0.5));
  ASSERT_EQ(a.grad.size(), b.grad.size());
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_EQ(a.grad[i], b.grad[i]);
}

TEST(Backward, EmptyBatchRejected) {
  const DenseNet net = zero_net({2, 2});
  EXPECT_THROW(msd::batch_loss_grad(net, std::vector<SampleLoss>{}), msd::ParamError);
}

TEST(Backward, MeanOfPerSampleGradientsEqualsBatchGradient) {
  Rng rng(47);
  const DenseNet net = msd::make_dense_net({5, 6, 3}, Activation::kRelu, rng);
  std::vector<SampleLoss> batch;
  Rng in_rng(48);
  for (int i = 0; i < 8; ++i) {
    std::vector<double> x(5);
    for (double& v : x) v = in_rng.normal();
    SampleLoss s;
    s.terms.push_back(msd::ce_term(x, OneHotLabel{i % 3, 3}));
    s.coeffs.push_back(0.5);
    s.terms.push_back(msd::kl_term(x, testutil::random_distribution(in_rng, 3), 4.0));
    s.coeffs.push_back(0.7);
    batch.push_back(std::move(s));
  }
  const LossGrad whole = msd::batch_loss_grad(net, batch);
  std::vector<double> mean(net.param_count(), 0.0);
  double mean_loss = 0.0;
  for (const SampleLoss& s : batch) {
    const LossGrad g = msd::sample_loss_grad(net, s);
    mean_loss += g.loss;
    msd::axpy(1.0, g.grad, mean);
  }
  mean_loss /= batch.size();
  for (double& v : mean) v /= batch.size();
  EXPECT_NEAR(whole.loss, mean_loss, 1e-15);
  for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(whole.grad[i], mean[i], 1e-10);
}

TEST(Backward, GradCheckAcrossShapesAndLosses) {
  // Smaller sweep here; the acceptance suite runs the full 20-shape oracle.
  const std::vector<std::vector<int>> shapes{{3, 4, 2}, {5, 3, 3, 2}, {2, 8, 4}};
  int seed = 100;
  for (const std::vector<int>& dims : shapes) {
    for (Activation act : {Activation::kRelu, Activation::kTanh}) {
      Rng rng(seed++);
      const DenseNet net = msd::make_dense_net(dims, act, rng);
      Rng in_rng(seed++);
      std::vector<SampleLoss> batch;
      for (int i = 0; i < 3; ++i) {
        std::vector<double> x(dims.front());
        for (double& v : x) v = in_rng.normal();
        SampleLoss s;
        s.terms.push_back(msd::ce_term(x, OneHotLabel{i % dims.back(), dims.back()}));
        s.coeffs.push_back(0.5);
        s.terms.push_back(msd::kl_term(x, testutil::random_distribution(in_rng, dims.back()), 4.0));
        s.coeffs.push_back(0.5 * in_rng.next_double());
        batch.push_back(std::move(s));
      }
      const LossGrad g = msd::batch_loss_grad(net, batch);
      const double gap = testutil::max_grad_gap(
          net, [&](const DenseNet& n) { return msd::batch_loss(n, batch); }, g.grad);
      EXPECT_LT(gap, 1e-5) << "dims[0]=" << dims[0] << " act=" << static_cast<int>(act);
    }
  }
}

TEST(Sgd, ZeroRateLeavesParametersUnchanged) {
  Rng rng(3);
  DenseNet net = msd::make_dense_net({2, 3, 2}, Activation::kRelu, rng);
  const std::vector<double> before = msd::flatten_params(net);
  std::vector<double> grad(net.param_count(), 1.0);
  msd::sgd_step(net, grad, 0.0);
  EXPECT_EQ(msd::flatten_params(net), before);
}

TEST(Sgd, ScalarArithmetic) {
  DenseNet net = zero_net({1, 1});
  net.weights[0][0] = 1.0;
  msd::sgd_step(net, std::vector<double>{2.0, 0.0}, 0.1);
  EXPECT_DOUBLE_EQ(net.weights[0][0], 0.8);
}

TEST(Sgd, RejectsNaNGradient) {
  DenseNet net = zero_net({1, 1});
  EXPECT_THROW(
      msd::sgd_step(net, std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 0.0}, 0.1),
      msd::NumericError);
}

TEST(AdamW, SingleStepBiasCorrected) {
  DenseNet net = zero_net({1, 1});
  net.weights[0][0] = 1.0;
  msd::AdamWConfig cfg;
  cfg.lr = 1e-3;
  msd::AdamWState state;
  msd::adamw_step(net, std::vector<double>{1.0, 0.0}, state, cfg);
  // m_hat = v_hat = 1 after one step, so the update is -lr / (1 + eps)
  EXPECT_NEAR(net.weights[0][0], 1.0 - 1e-3, 1e-10);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamW, DecoupledWeightDecayShrinksWeights) {
  DenseNet net = zero_net({1, 1});
  net.weights[0][0] = 10.0;
  msd::AdamWConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.5;
  msd::AdamWState state;
  msd::adamw_step(net, std::vector<double>{0.0, 0.0}, state, cfg);
  // zero gradient: only the decay acts, w -= lr * wd * w
  EXPECT_NEAR(net.weights[0][0], 10.0 - 1e-2 * 0.5 * 10.0, 1e-12);
}

TEST(Schedule, WarmupThenLinearDecay) {
  const std::int64_t total = 100;
  EXPECT_NEAR(msd::warmup_linear_scale(0, total), 0.1, 1e-12);
  EXPECT_NEAR(msd::warmup_linear_scale(9, total), 1.0, 1e-12);
  EXPECT_NEAR(msd::warmup_linear_scale(10, total), 1.0, 1e-12);
  EXPECT_GT(msd::warmup_linear_scale(50, total), 0.0);
  EXPECT_LT(msd::warmup_linear_scale(99, total), 0.02);
  // monotone decay after warmup
  for (int s = 10; s < 99; ++s)
    EXPECT_GT(msd::warmup_linear_scale(s, total), msd::warmup_linear_scale(s + 1, total));
}

TEST(Checkpoint, RoundTripIsValueExact) {
  Rng rng(77);
  const DenseNet net = msd::make_dense_net({5, 7, 3}, Activation::kTanh, rng);
  const std::string path = (std::filesystem::temp_directory_path() / "msd_ckpt_test.json").string();
  msd::save_checkpoint(net, path);
  const DenseNet back = msd::load_checkpoint(path);
  EXPECT_EQ(back.layer_dims, net.layer_dims);
  EXPECT_EQ(back.activation, net.activation);
  EXPECT_EQ(back.weights, net.weights);
  EXPECT_EQ(back.biases, net.biases);
  std::filesystem::remove(path);
}

TEST(Checkpoint, SigmoidOutputFlagRoundTrips) {
  Rng rng(78);
  const DenseNet net = msd::make_dense_net({6, 4, 3}, Activation::kTanh, rng);
  const std::string path = (std::filesystem::temp_directory_path() / "msd_ckpt_flag.json").string();
  msd::save_checkpoint(net, path, /*sigmoid_output=*/true);
  bool flag = false;
  msd::load_checkpoint(path, &flag);
  EXPECT_TRUE(flag);
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingFileRaises) {
  EXPECT_THROW(msd::load_checkpoint("/nonexistent/msd.json"), msd::MissingInputError);
}
