// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "msd/checkpoint.hpp"
#include "msd/weighting.hpp"
#include "test_util.hpp"

using msd::ModalityWeights;
using msd::OneHotLabel;
using msd::Rng;
using msd::SoftPrediction;

TEST(PopulationWeights, BroadcastAndValidation) {
  const ModalityWeights w = msd::population_weights(1.0, 0.5, 0.25);
  EXPECT_EQ(w.w, 1.0);
  EXPECT_EQ(w.w_v, 0.5);
  EXPECT_EQ(w.w_t, 0.25);
  EXPECT_THROW(msd::population_weights(1.5, 0.0, 0.0), msd::ParamError);
  EXPECT_THROW(msd::population_weights(0.0, -0.1, 0.0), msd::ParamError);
}

TEST(ImportanceWeights, IdenticalPredictionsGiveMultiOnly) {
  const SoftPrediction p{{0.2, 0.8}, 4.0};
  const ModalityWeights w = msd::importance_weights(p, p, p);
  EXPECT_DOUBLE_EQ(w.w, 1.0);
  EXPECT_DOUBLE_EQ(w.w_v, 0.0);
  EXPECT_DOUBLE_EQ(w.w_t, 0.0);
}

TEST(ImportanceWeights, WorkedExample) {
  const SoftPrediction multi{{0.75, 0.25}, 1.0};
  const SoftPrediction image{{0.5, 0.5}, 1.0};
  const SoftPrediction text = multi;
  const msd::ImportanceScores scores = msd::importance_scores(multi, image, text);
  EXPECT_NEAR(scores.text, 0.13081, 1e-5);
  EXPECT_DOUBLE_EQ(scores.image, 0.0);
  const ModalityWeights w = msd::importance_weights(multi, image, text);
  EXPECT_DOUBLE_EQ(w.w, 1.0);
  EXPECT_NEAR(w.w_v, 0.13007, 1e-5);
  EXPECT_DOUBLE_EQ(w.w_t, 0.0);
}

TEST(ImportanceWeights, RangeProperty) {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const int C = 2 + static_cast<int>(rng.below(4));
    const SoftPrediction multi{testutil::random_distribution(rng, C), 4.0};
    const SoftPrediction image{testutil::random_distribution(rng, C), 4.0};
    const SoftPrediction text{testutil::random_distribution(rng, C), 4.0};
    const ModalityWeights w = msd::importance_weights(multi, image, text);
    EXPECT_EQ(w.w, 1.0);
    EXPECT_GE(w.w_v, 0.0);
    EXPECT_LT(w.w_v, 1.0);
    EXPECT_GE(w.w_t, 0.0);
    EXPECT_LT(w.w_t, 1.0);
  }
}

TEST(ImportanceWeights, ClassPermutationInvariance) {
  Rng rng(42);
  const int C = 4;
  std::vector<double> a = testutil::random_distribution(rng, C);
  std::vector<double> b = testutil::random_distribution(rng, C);
  std::vector<double> c = testutil::random_distribution(rng, C);
  const ModalityWeights w1 =
      msd::importance_weights({a, 4.0}, {b, 4.0}, {c, 4.0});
  // rotate all three consistently
  const auto rotate = [](std::vector<double> v) {
    std::rotate(v.begin(), v.begin() + 1, v.end());
    return v;
  };
  const ModalityWeights w2 =
      msd::importance_weights({rotate(a), 4.0}, {rotate(b), 4.0}, {rotate(c), 4.0});
  EXPECT_NEAR(w1.w_v, w2.w_v, 1e-12);
  EXPECT_NEAR(w1.w_t, w2.w_t, 1e-12);
}

TEST(CorrectnessWeights, EqualPredictionsGiveThirds) {
  const SoftPrediction p{{0.6, 0.4}, 1.0};
  const OneHotLabel y{0, 2};
  const ModalityWeights w = msd::correctness_weights(p, p, p, y);
  EXPECT_NEAR(w.w, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.w_v, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.w_t, 1.0 / 3.0, 1e-15);
}

TEST(CorrectnessWeights, InverseProportionalExample) {
  // cross-entropies 0.2, 0.4, 0.4 -> weights 0.5, 0.25, 0.25
  const OneHotLabel y{0, 2};
  const SoftPrediction multi{{std::exp(-0.2), 1.0 - std::exp(-0.2)}, 1.0};
  const SoftPrediction image{{std::exp(-0.4), 1.0 - std::exp(-0.4)}, 1.0};
  const SoftPrediction text = image;
  const ModalityWeights w = msd::correctness_weights(multi, image, text, y);
  EXPECT_NEAR(w.w, 0.5, 1e-12);
  EXPECT_NEAR(w.w_v, 0.25, 1e-12);
  EXPECT_NEAR(w.w_t, 0.25, 1e-12);
}

TEST(CorrectnessWeights, PerfectPredictionClampsAndNormalizes) {
  const OneHotLabel y{0, 2};
  const SoftPrediction perfect{{1.0, 0.0}, 1.0};  // cross-entropy clamps to eps
  const double h = std::exp(-1.0);
  const SoftPrediction other{{h, 1.0 - h}, 1.0};  // cross-entropy exactly 1
  const ModalityWeights w = msd::correctness_weights(perfect, other, other, y);
  EXPECT_GT(w.w, 0.999);
  EXPECT_NEAR(w.w + w.w_v + w.w_t, 1.0, 1e-12);
  EXPECT_GT(w.w_v, 0.0);
  EXPECT_GT(w.w_t, 0.0);
}

TEST(CorrectnessWeights, SumToOneProperty) {
  Rng rng(43);
  for (int trial = 0; trial < 300; ++trial) {
    const int C = 2 + static_cast<int>(rng.below(4));
    const SoftPrediction multi{testutil::random_distribution(rng, C), 1.0};
    const SoftPrediction image{testutil::random_distribution(rng, C), 1.0};
    const SoftPrediction text{testutil::random_distribution(rng, C), 1.0};
    const OneHotLabel y{static_cast<int>(rng.below(C)), C};
    const ModalityWeights w = msd::correctness_weights(multi, image, text, y);
    EXPECT_NEAR(w.w + w.w_v + w.w_t, 1.0, 1e-12);
    EXPECT_GT(w.w, 0.0);
    EXPECT_GT(w.w_v, 0.0);
    EXPECT_GT(w.w_t, 0.0);
  }
}

TEST(MetaNet, ZeroOutputLayerStartsUniform) {
  Rng rng(44);
  const msd::MetaNet meta = msd::make_meta_net(3, 16, rng);
  const SoftPrediction p{{0.2, 0.3, 0.5}, 4.0};
  const SoftPrediction q{{0.7, 0.2, 0.1}, 4.0};
  const ModalityWeights w = msd::meta_forward(meta, p, q, p);
  EXPECT_DOUBLE_EQ(w.w, 0.5);
  EXPECT_DOUBLE_EQ(w.w_v, 0.5);
  EXPECT_DOUBLE_EQ(w.w_t, 0.5);
}

TEST(MetaNet, OutputsStrictlyInsideUnitCube) {
  Rng rng(45);
  msd::MetaNet meta = msd::make_meta_net(2, 8, rng);
  // randomize the output layer too
  for (double& v : meta.body.weights.back()) v = rng.uniform(-3.0, 3.0);
  for (double& v : meta.body.biases.back()) v = rng.uniform(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const SoftPrediction a{testutil::random_distribution(rng, 2), 4.0};
    const SoftPrediction b{testutil::random_distribution(rng, 2), 4.0};
    const SoftPrediction c{testutil::random_distribution(rng, 2), 4.0};
    const ModalityWeights w = msd::meta_forward(meta, a, b, c);
    for (double v : {w.w, w.w_v, w.w_t}) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(MetaNet, SwappingIdenticalInputsKeepsOutput) {
  Rng rng(46);
  msd::MetaNet meta = msd::make_meta_net(2, 8, rng);
  for (double& v : meta.body.weights.back()) v = rng.uniform(-1.0, 1.0);
  const SoftPrediction a{{0.9, 0.1}, 4.0};
  const SoftPrediction b{{0.4, 0.6}, 4.0};
  const ModalityWeights w1 = msd::meta_forward(meta, a, b, b);
  const ModalityWeights w2 = msd::meta_forward(meta, a, b, b);
  EXPECT_EQ(w1.w, w2.w);
  EXPECT_EQ(w1.w_v, w2.w_v);
  EXPECT_EQ(w1.w_t, w2.w_t);
}

TEST(MetaNet, JacobianMatchesFiniteDifferences) {
  Rng rng(47);
  msd::MetaNet meta = msd::make_meta_net(2, 8, rng);  // 6-8-3 body
  for (double& v : meta.body.weights.back()) v = rng.uniform(-1.0, 1.0);
  for (double& v : meta.body.biases.back()) v = rng.uniform(-0.5, 0.5);
  const std::vector<double> input{0.7, 0.3, 0.5, 0.5, 0.2, 0.8};
  const std::array<std::vector<double>, 3> jac = msd::meta_backward(meta, input);
  for (int k = 0; k < 3; ++k) {
    msd::MetaNet probe = meta;
    const auto fk = [&](std::span<const double> params) {
      msd::set_params(probe.body, params);
      const ModalityWeights w = msd::meta_forward_input(probe, input);
      return k == 0 ? w.w : (k == 1 ? w.w_v : w.w_t);
    };
    const std::vector<double> fd =
        testutil::central_differences(fk, msd::flatten_params(meta.body));
    for (std::size_t i = 0; i < fd.size(); ++i)
      EXPECT_LT(testutil::relative_error(jac[k][i], fd[i]), 1e-5) << "output " << k << " param " << i;
  }
}

TEST(MetaNet, CheckpointCarriesSigmoidFlag) {
  Rng rng(48);
  const msd::MetaNet meta = msd::make_meta_net(3, 8, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "msd_meta_ckpt.json").string();
  msd::save_checkpoint(meta.body, path, /*sigmoid_output=*/true);
  bool flag = false;
  const msd::DenseNet body = msd::load_checkpoint(path, &flag);
  EXPECT_TRUE(flag);
  EXPECT_EQ(body.weights, meta.body.weights);
  std::filesystem::remove(path);
}

TEST(GridSearch, SingleCellReturnsThatCell) {
  msd::PopulationGrid grid{{0.5}, {0.25}, {0.75}};
  const msd::GridSearchResult r =
      msd::grid_search_population(grid, [](double, double, double) { return 0.9; });
  EXPECT_EQ(r.table.size(), 1u);
  EXPECT_EQ(r.best[0], 0.5);
  EXPECT_EQ(r.best[1], 0.25);
  EXPECT_EQ(r.best[2], 0.75);
}

TEST(GridSearch, DeterministicSelectionAndTieBreak) {
  msd::PopulationGrid grid{{1.0, 0.0}, {0.0, 1.0}, {0.0}};
  // all cells tie: lexicographically smallest triple must win
  const msd::GridSearchResult r =
      msd::grid_search_population(grid, [](double, double, double) { return 0.5; });
  EXPECT_EQ(r.table.size(), 4u);
  EXPECT_EQ(r.best[0], 0.0);
  EXPECT_EQ(r.best[1], 0.0);
  EXPECT_EQ(r.best[2], 0.0);
}

TEST(GridSearch, FailedCellsAreRecordedAndSkipped) {
  msd::PopulationGrid grid{{0.0, 1.0}, {0.5}, {0.5}};
  const msd::GridSearchResult r = msd::grid_search_population(
      grid, [](double w, double, double) -> double {
        if (w == 0.0) throw msd::NumericError("diverged");
        return 0.7;
      });
  EXPECT_EQ(r.table.size(), 2u);
  EXPECT_FALSE(r.table[0].error.empty());
  EXPECT_TRUE(r.table[1].error.empty());
  EXPECT_EQ(r.best[0], 1.0);
}

TEST(GridSearch, AllCellsFailingRaises) {
  msd::PopulationGrid grid{{0.0}, {0.0}, {0.0}};
  EXPECT_THROW(msd::grid_search_population(
                   grid, [](double, double, double) -> double { throw msd::NumericError("x"); }),
               msd::NumericError);
}

TEST(GridSearch, ParallelMatchesSerial) {
  msd::PopulationGrid grid{{0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}};
  const auto metric = [](double w, double wv, double wt) {
    return 0.3 * w + 0.2 * wv + 0.1 * wt;  // unique maximum at (1, 1, 1)
  };
  const msd::GridSearchResult serial = msd::grid_search_population(grid, metric, 1);
  const msd::GridSearchResult parallel = msd::grid_search_population(grid, metric, 4);
  ASSERT_EQ(serial.table.size(), parallel.table.size());
  for (std::size_t i = 0; i < serial.table.size(); ++i)
    EXPECT_EQ(serial.table[i].metric, parallel.table[i].metric);
  EXPECT_EQ(serial.best, parallel.best);
  EXPECT_EQ(serial.best[0], 1.0);
}
